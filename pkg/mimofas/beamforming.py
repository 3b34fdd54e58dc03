"""Beamform on the selected subchannel and evaluate its rate."""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import BracketError, DomainError

#: Create logger for this file.
logger = logging.getLogger()

#: Relative tolerance of the waterfilling power sum.
DEFAULT_RELATIVE_TOLERANCE: float = 1e-9

#: Bisection iterations before giving up on the tolerance.
MAX_BISECTION_STEPS: int = 200

#: Smallest eigenvalue accepted in an input covariance, relative to its norm.
PSD_TOLERANCE: float = 1e-10


@dataclass(frozen=True)
class BeamformingSolution:
    """Store the SVD beamformers of a channel."""

    #: Receive combiner W_rx, the conjugate transpose of the left vectors
    rx_combiner: np.ndarray
    #: Transmit precoder W_tx, the right singular vectors
    tx_precoder: np.ndarray
    #: Singular values in descending order
    singular_values: np.ndarray


@dataclass(frozen=True)
class PowerAllocation:
    """Store the power of every stream and the water level."""

    #: Power of every stream
    powers: np.ndarray
    #: Water level
    water_level: float


def svd_beamform(H: np.ndarray) -> BeamformingSolution:
    """Diagonalize `H` with its singular value decomposition.

    :param H: Channel matrix.
    :return: Beamformers such that `W_rx H W_tx` is diagonal.
    """
    u, s, vh = np.linalg.svd(np.asarray(H), full_matrices=False)
    return BeamformingSolution(u.conj().T, vh.conj().T, s)


def waterfill(
    gains: np.ndarray,
    snr: float,
    tolerance: float | None = None,
    mu_max: float | None = None,
) -> PowerAllocation:
    """Allocate `snr` over parallel channels by waterfilling.

    The water level is found by bisection on (0, mu_max] then refined with
    the exact level of the active set found.

    :param gains: Squared singular values of the channels.
    :param snr: Total power, linear.
    :param tolerance: Accepted error on the power sum, 1e-9 snr by default.
    :param mu_max: Upper bound of the water level, the SNR plus the
        inverse of the weakest positive gain by default.
    :return: Power allocation in the order of `gains`.
    :raises DomainError: If `snr` or all gains are not positive.
    :raises BracketError: If `mu_max` cannot reach `snr`.
    """
    gains = np.asarray(gains, dtype=float)
    if snr <= 0:
        msg = "SNR must be positive"
        raise DomainError(msg)
    usable = gains > 0
    if not np.any(usable):
        msg = "At least one channel gain must be positive"
        raise DomainError(msg)
    if tolerance is None:
        tolerance = DEFAULT_RELATIVE_TOLERANCE * snr

    floors = np.full(gains.shape, np.inf)
    floors[usable] = 1 / gains[usable]
    if mu_max is None:
        mu_max = snr + floors[usable].max()

    def power_sum(mu: float) -> float:
        return float(np.sum(np.clip(mu - floors, 0, None)))

    if power_sum(mu_max) < snr - tolerance:
        msg = f"Water level bound {mu_max} cannot reach SNR {snr}"
        raise BracketError(msg)

    low, high = 0.0, mu_max
    mu = high
    for _ in range(MAX_BISECTION_STEPS):
        mu = (low + high) / 2
        excess = power_sum(mu) - snr
        if abs(excess) <= tolerance:
            break
        if excess > 0:
            high = mu
        else:
            low = mu

    active = floors < mu
    refined = (snr + floors[active].sum()) / np.count_nonzero(active)
    if np.all(floors[active] < refined) and np.all(floors[~active] >= refined):
        mu = refined
    return PowerAllocation(np.clip(mu - floors, 0, None), float(mu))


def waterfill_rates(gains: np.ndarray, snr: float) -> np.ndarray:
    """Return waterfilled rates of many channels at once.

    The water level is computed in closed form from the gains sorted in
    descending order along the last axis.

    :param gains: Squared singular values, shape (..., k).
    :param snr: Total power, linear.
    :return: Rates in bits/s/Hz, shape (...).
    """
    gains = -np.sort(-np.asarray(gains, dtype=float), axis=-1)
    with np.errstate(divide="ignore"):
        floors = np.where(gains > 0, 1 / gains, np.inf)
    counts = np.arange(1, gains.shape[-1] + 1)
    levels = (snr + np.cumsum(floors, axis=-1)) / counts
    active = np.count_nonzero(levels > floors, axis=-1)
    level = np.take_along_axis(
        levels,
        np.maximum(active - 1, 0)[..., None],
        axis=-1,
    )
    used = counts <= active[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(used, np.log2(level * gains), 0.0)
    return terms.sum(axis=-1)


def input_covariance(
    solution: BeamformingSolution,
    allocation: PowerAllocation,
) -> np.ndarray:
    """Return the input covariance `W_tx P W_tx^H`."""
    precoder = solution.tx_precoder
    return (precoder * allocation.powers) @ precoder.conj().T


def rate(
    H: np.ndarray,
    snr: float,
    tolerance: float | None = None,
    mu_max: float | None = None,
) -> float:
    """Return the waterfilled rate of `H` in bits/s/Hz.

    :param H: Channel matrix.
    :param snr: Linear transmit SNR.
    :param tolerance: Accepted error on the power sum.
    :param mu_max: Upper bound of the water level.
    :return: Nonnegative rate.
    """
    gains = svd_beamform(H).singular_values ** 2
    if not np.any(gains > 0):
        return 0.0
    allocation = waterfill(gains, snr, tolerance, mu_max)
    return float(np.sum(np.log2(1 + allocation.powers * gains)))


def rate_equal_power(H: np.ndarray, snr: float, streams: int) -> float:
    """Return the rate with `snr` split equally over `streams` streams.

    :param H: Channel matrix.
    :param snr: Linear transmit SNR.
    :param streams: Divisor of the power.
    :return: Nonnegative rate.
    """
    if streams < 1:
        msg = "Stream count must be at least 1"
        raise DomainError(msg)
    gains = svd_beamform(H).singular_values ** 2
    return float(np.sum(np.log2(1 + snr / streams * gains)))


def rate_general(H: np.ndarray, covariance: np.ndarray) -> float:
    """Return log2 det(I + H K H^H) for an input covariance K.

    :param H: Channel matrix of shape (n_rx, n_tx).
    :param covariance: Positive semidefinite matrix of shape (n_tx, n_tx).
    :return: Nonnegative rate.
    :raises DomainError: If the covariance is not positive semidefinite.
    """
    H = np.asarray(H)
    K = np.asarray(covariance)
    if K.shape != (H.shape[1], H.shape[1]):
        msg = f"Covariance shape {K.shape} does not match channel {H.shape}"
        raise DomainError(msg)
    scale = max(1.0, float(np.linalg.norm(K)))
    if not np.allclose(K, K.conj().T, atol=PSD_TOLERANCE * scale):
        msg = "Input covariance must be Hermitian"
        raise DomainError(msg)
    if np.linalg.eigvalsh((K + K.conj().T) / 2).min() < -PSD_TOLERANCE * scale:
        msg = "Input covariance must be positive semidefinite"
        raise DomainError(msg)
    _, logdet = np.linalg.slogdet(
        np.eye(H.shape[0]) + H @ K @ H.conj().T,
    )
    return max(float(logdet) / np.log(2), 0.0)


def rate_upper_bound(H: np.ndarray, snr: float, streams: int) -> float:
    """Return the waterfilled rate of the `streams` strongest modes of `H`.

    :param H: Full channel matrix.
    :param snr: Linear transmit SNR.
    :param streams: Number of streams kept.
    :return: Upper bound of the rate of any selected subchannel.
    """
    gains = svd_beamform(H).singular_values[:streams] ** 2
    if not np.any(gains > 0):
        return 0.0
    allocation = waterfill(gains, snr)
    return float(np.sum(np.log2(1 + allocation.powers * gains)))
