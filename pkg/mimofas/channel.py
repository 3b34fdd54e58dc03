"""Synthesize spatially correlated MIMO fluid antenna channels."""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError
from .geometry import (
    DEFAULT_KERNEL,
    EigenDecomposition,
    SurfaceGeometry,
    correlation_eigen,
)

#: Create logger for this file.
logger = logging.getLogger()

#: Largest campaign seed accepted.
MAX_SEED: int = 2**64 - 1


@dataclass(frozen=True)
class TrialSeed:
    """Identify the random stream of one Monte Carlo trial."""

    #: Seed of the whole campaign
    campaign_seed: int
    #: Index of the trial in the campaign
    trial_index: int

    def __post_init__(self) -> None:
        """Check the seed range."""
        if not 0 <= self.campaign_seed <= MAX_SEED:
            msg = "Campaign seed must be a 64-bit unsigned integer"
            raise DomainError(msg)
        if self.trial_index < 0:
            msg = "Trial index must be nonnegative"
            raise DomainError(msg)

    def generator(self, stream: int = 0) -> np.random.Generator:
        """Return the random generator of this trial.

        Each trial owns independent sub-streams, so fading and random port
        draws never share numbers.

        :param stream: Sub-stream identifier.
        :return: Seeded random generator.
        """
        sequence = np.random.SeedSequence(
            entropy=self.campaign_seed,
            spawn_key=(self.trial_index, stream),
        )
        return np.random.default_rng(sequence)


#: Sub-stream used for fading.
FADING_STREAM: int = 0

#: Sub-stream used for random port selection.
SELECTION_STREAM: int = 1


def draw_gaussian_matrix(
    seed: TrialSeed,
    rows: int,
    cols: int,
    stream: int = FADING_STREAM,
) -> np.ndarray:
    """Draw i.i.d. circularly symmetric complex Gaussian entries.

    Real and imaginary parts have zero mean and variance 1/2.

    :param seed: Trial seed.
    :param rows: Number of rows.
    :param cols: Number of columns.
    :param stream: Sub-stream of the trial.
    :return: Complex matrix of shape (rows, cols).
    """
    if rows < 1 or cols < 1:
        msg = "Gaussian matrix dimensions must be at least 1"
        raise DomainError(msg)
    parts = seed.generator(stream).standard_normal((2, rows, cols))
    return (parts[0] + 1j * parts[1]) * np.sqrt(0.5)


@dataclass(frozen=True)
class ChannelModel:
    """Describe the Kronecker correlated channel between two surfaces."""

    #: Eigen decomposition of the receive correlation
    rx_eig: EigenDecomposition
    #: Eigen decomposition of the transmit correlation
    tx_eig: EigenDecomposition
    #: Path loss amplitude
    path_loss: float = 1.0

    def __post_init__(self) -> None:
        """Check the path loss amplitude."""
        if self.path_loss <= 0:
            msg = "Path loss amplitude must be positive"
            raise DomainError(msg)

    @classmethod
    def from_geometry(
        cls,
        geom_rx: SurfaceGeometry,
        geom_tx: SurfaceGeometry,
        path_loss: float = 1.0,
        kernel: str = DEFAULT_KERNEL,
    ) -> "ChannelModel":
        """Create the channel model between two port grids.

        :param geom_rx: Receive geometry.
        :param geom_tx: Transmit geometry.
        :param path_loss: Path loss amplitude.
        :param kernel: Registered correlation kernel name.
        :return: Channel model.
        """
        return cls(
            correlation_eigen(geom_rx, kernel),
            correlation_eigen(geom_tx, kernel),
            path_loss,
        )

    @property
    def shape(self) -> tuple[int, int]:
        """Return the channel shape (N_rx, N_tx)."""
        return len(self.rx_eig.values), len(self.tx_eig.values)

    @cached_property
    def rx_factor(self) -> np.ndarray:
        """Return U_rx sqrt(Lambda_rx) with negative eigenvalues clamped."""
        values = np.clip(self.rx_eig.values, 0, None)
        return self.rx_eig.vectors * np.sqrt(values)

    @cached_property
    def tx_factor(self) -> np.ndarray:
        """Return U_tx sqrt(Lambda_tx) with negative eigenvalues clamped."""
        values = np.clip(self.tx_eig.values, 0, None)
        return self.tx_eig.vectors * np.sqrt(values)

    def covariance(self) -> np.ndarray:
        """Return the analytic covariance of the column-stacked channel."""
        J_rx = self.rx_eig.reconstruct()
        J_tx = self.tx_eig.reconstruct()
        return self.path_loss**2 * np.kron(J_tx.T, J_rx)

    def realize(self, seed: TrialSeed) -> "ChannelRealization":
        """Draw the channel realization of one trial.

        :param seed: Trial seed.
        :return: Channel realization.
        """
        g = draw_gaussian_matrix(seed, *self.shape)
        return synthesize_channel(self, g, seed)


@dataclass(frozen=True)
class ChannelRealization:
    """Store one channel realization and where it comes from."""

    #: Complex channel matrix of shape (N_rx, N_tx)
    h: np.ndarray
    #: i.i.d. Gaussian matrix it was synthesized from
    g: np.ndarray
    #: Seed of the trial, if any
    seed: TrialSeed | None = None


def synthesize_channel(
    model: ChannelModel,
    g: np.ndarray,
    seed: TrialSeed | None = None,
) -> ChannelRealization:
    """Map i.i.d. fading through the correlation structure.

    :param model: Channel model.
    :param g: i.i.d. complex Gaussian matrix of shape (N_rx, N_tx).
    :param seed: Seed that produced `g`.
    :return: Channel realization.
    :raises DomainError: If `g` does not match the model shape.
    """
    g = np.asarray(g)
    if g.shape != model.shape:
        msg = f"Fading matrix shape {g.shape} does not match {model.shape}"
        raise DomainError(msg)
    h = model.path_loss * (model.rx_factor @ g @ model.tx_factor.T)
    return ChannelRealization(h, g, seed)


def empirical_vec_covariance(
    model: ChannelModel,
    trials: int,
    seed: int,
) -> np.ndarray:
    """Estimate the covariance of the column-stacked channel.

    :param model: Channel model.
    :param trials: Number of seeded trials.
    :param seed: Campaign seed.
    :return: Complex matrix of shape (N_rx N_tx, N_rx N_tx).
    """
    if trials < 1:
        msg = "At least one trial is required"
        raise DomainError(msg)
    logger.debug("Estimate channel covariance over %d trials", trials)
    samples = np.stack(
        [
            model.realize(TrialSeed(seed, trial)).h.ravel(order="F")
            for trial in range(trials)
        ],
    )
    return samples.T @ samples.conj() / trials
