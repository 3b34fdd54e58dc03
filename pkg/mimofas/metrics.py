"""Estimate rates, outages and diversity multiplexing tradeoffs."""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from joblib import Parallel, delayed, effective_n_jobs

from .beamforming import rate
from .channel import ChannelModel, TrialSeed
from .coupling import (
    Coupling,
    CouplingMatrices,
    DipoleSpec,
    SMatrixModel,
    apply_coupling_liquid,
    apply_coupling_pixel,
    liquid_coupling,
    pixel_coupling,
)
from .errors import DomainError
from .geometry import DEFAULT_KERNEL, SurfaceGeometry
from .selection import (
    DEFAULT_COMBO_LIMIT,
    DEFAULT_SEPARATION,
    SelectionResult,
    Strategy,
    SwapCriterion,
    exhaustive_select,
    greedy_select,
    qr_mimo_fas_select,
    random_select,
    submatrix,
)

#: Create logger for this file.
logger = logging.getLogger()

#: Quantile of the standard normal for a 95 % confidence interval.
Z_95: float = 1.96

#: Probability below which an outage estimate is flagged as rare.
RARE_EVENT_PROBABILITY: float = 1e-4

#: Spacing of fixed antennas in wavelengths.
HALF_WAVELENGTH: float = 0.5

#: Chunks handed to each worker when sampling trials.
CHUNKS_PER_WORKER: int = 4


def db_to_linear(value_db: float) -> float:
    """Convert a power ratio from dB to linear scale."""
    return 10 ** (value_db / 10)


def half_wavelength_count(aperture: float) -> int:
    """Return how many antennas fit at half a wavelength on `aperture`."""
    return math.floor(aperture / HALF_WAVELENGTH + 1e-9) + 1


@dataclass(frozen=True)
class LinkScenario:
    """Describe one link to simulate."""

    #: Transmit geometry
    geom_tx: SurfaceGeometry
    #: Receive geometry
    geom_rx: SurfaceGeometry
    #: Number of active transmit ports
    n_tx: int
    #: Number of active receive ports
    n_rx: int
    #: Linear transmit SNR
    snr: float
    #: Port selection strategy
    strategy: Strategy = Strategy.QR
    #: Path loss amplitude
    path_loss: float = 1.0
    #: Registered correlation kernel name
    kernel: str = DEFAULT_KERNEL
    #: Swap formula of the rank revealing QR
    criterion: SwapCriterion = SwapCriterion.DET_RATIO
    #: Minimum distance between greedily selected ports
    separation: float = DEFAULT_SEPARATION
    #: Mutual coupling model
    coupling: Coupling = Coupling.NONE
    #: Largest number of combinations searched exhaustively
    combo_limit: int = DEFAULT_COMBO_LIMIT
    #: Dipole at every port when coupling is modelled
    dipole: DipoleSpec = field(default_factory=DipoleSpec)
    #: S-matrix levels of RF pixel surfaces
    smatrix: SMatrixModel = field(default_factory=SMatrixModel)

    def __post_init__(self) -> None:
        """Check the active port counts and the SNR."""
        if self.snr <= 0:
            msg = "SNR must be positive"
            raise DomainError(msg)
        if self.n_tx < 1 or self.n_rx < 1:
            msg = "Active port counts must be at least 1"
            raise DomainError(msg)
        if self.strategy is not Strategy.MIMO and (
            self.n_tx > self.geom_tx.n_ports
            or self.n_rx > self.geom_rx.n_ports
        ):
            msg = "Active port counts cannot exceed the port counts"
            raise DomainError(msg)

    @property
    def n_min(self) -> int:
        """Return the number of spatial streams."""
        return min(self.n_tx, self.n_rx)

    def with_snr(self, snr: float) -> "LinkScenario":
        """Return a copy of the scenario at another SNR."""
        return replace(self, snr=snr)


def _most_square_grid(count: int) -> tuple[int, int]:
    """Return the grid (n1, n2) with n1 n2 = count and n1 <= n2 closest."""
    n1 = max(k for k in range(1, math.isqrt(count) + 1) if count % k == 0)
    return n1, count // n1


def _fixed_array(geom: SurfaceGeometry, count: int) -> SurfaceGeometry:
    """Spread `count` fixed antennas over the aperture of `geom`."""
    n1, n2 = _most_square_grid(count)
    return SurfaceGeometry(n1, n2, geom.w1, geom.w2)


def _half_wavelength_array(geom: SurfaceGeometry) -> SurfaceGeometry:
    """Place antennas half a wavelength apart over the aperture of `geom`."""
    n1 = half_wavelength_count(geom.w1)
    n2 = half_wavelength_count(geom.w2)
    return SurfaceGeometry(
        n1,
        n2,
        HALF_WAVELENGTH * (n1 - 1),
        HALF_WAVELENGTH * (n2 - 1),
    )


def resolve_scenario(scenario: LinkScenario) -> LinkScenario:
    """Replace the port grids by the antennas a baseline actually uses.

    Traditional MIMO spreads its antennas over the same aperture, antenna
    selection uses a half wavelength grid over it.

    :param scenario: Scenario to resolve.
    :return: Scenario whose geometries are the simulated ones.
    :raises DomainError: If antenna selection has too few antennas.
    """
    if scenario.strategy is Strategy.MIMO:
        return replace(
            scenario,
            geom_tx=_fixed_array(scenario.geom_tx, scenario.n_tx),
            geom_rx=_fixed_array(scenario.geom_rx, scenario.n_rx),
        )
    if scenario.strategy is Strategy.MIMO_AS:
        return replace(
            scenario,
            geom_tx=_half_wavelength_array(scenario.geom_tx),
            geom_rx=_half_wavelength_array(scenario.geom_rx),
        )
    return scenario


class LinkModel:
    """Simulate the trials of a scenario."""

    def __init__(self, scenario: LinkScenario) -> None:
        """Create the link model.

        :param scenario: Scenario to simulate.
        """
        logger.debug("Create link model for %s", scenario.strategy.value)
        self.scenario = resolve_scenario(scenario)
        self.channel = ChannelModel.from_geometry(
            self.scenario.geom_rx,
            self.scenario.geom_tx,
            self.scenario.path_loss,
            self.scenario.kernel,
        )
        if self.scenario.coupling is Coupling.PIXEL:
            # Computed once before any worker reads it.
            _ = self.pixel_matrices

    @cached_property
    def pixel_matrices(self) -> CouplingMatrices:
        """Return the coupling matrices of every port."""
        scenario = self.scenario
        dipole = scenario.dipole
        return CouplingMatrices(
            pixel_coupling(scenario.geom_rx, scenario.smatrix, dipole),
            pixel_coupling(scenario.geom_tx, scenario.smatrix, dipole),
        )

    def select(self, H: np.ndarray, seed: TrialSeed) -> SelectionResult:
        """Select the active ports of one channel realization.

        :param H: Channel matrix of shape (N_rx, N_tx).
        :param seed: Trial seed, used by random selection.
        :return: Selected ports.
        """
        scenario = self.scenario
        match scenario.strategy:
            case Strategy.OPTIMAL:
                return exhaustive_select(
                    H,
                    scenario.n_tx,
                    scenario.n_rx,
                    scenario.snr,
                    scenario.combo_limit,
                )
            case Strategy.QR | Strategy.MIMO_AS:
                return qr_mimo_fas_select(
                    H,
                    scenario.n_tx,
                    scenario.n_rx,
                    scenario.criterion,
                )
            case Strategy.GREEDY:
                return greedy_select(
                    H,
                    scenario.geom_tx,
                    scenario.geom_rx,
                    scenario.n_tx,
                    scenario.n_rx,
                    scenario.separation,
                )
            case Strategy.RANDOM:
                return random_select(
                    seed,
                    H.shape[1],
                    H.shape[0],
                    scenario.n_tx,
                    scenario.n_rx,
                )
        return SelectionResult.full(H.shape[1], H.shape[0])

    def effective_channel(self, seed: TrialSeed) -> np.ndarray:
        """Return the selected and coupled channel of one trial.

        :param seed: Trial seed.
        :return: Channel of shape (n_rx, n_tx).
        """
        H = self.channel.realize(seed).h
        if self.scenario.coupling is Coupling.PIXEL:
            H = apply_coupling_pixel(H, self.pixel_matrices)
        selection = self.select(H, seed)
        H_bar = submatrix(H, selection)
        if self.scenario.coupling is Coupling.LIQUID:
            matrices = liquid_coupling(
                selection,
                self.scenario.geom_rx,
                self.scenario.geom_tx,
                self.scenario.dipole,
            )
            H_bar = apply_coupling_liquid(H_bar, matrices)
        return H_bar

    def trial_rate(self, seed: TrialSeed) -> float:
        """Return the waterfilled rate of one trial."""
        return rate(self.effective_channel(seed), self.scenario.snr)


def _chunk_rates(
    model: LinkModel,
    campaign_seed: int,
    start: int,
    stop: int,
) -> np.ndarray:
    """Return the rates of trials [start, stop)."""
    return np.array(
        [
            model.trial_rate(TrialSeed(campaign_seed, trial))
            for trial in range(start, stop)
        ],
    )


def sample_rates(
    scenario: LinkScenario,
    trials: int,
    seed: int,
    threads: int | None = 1,
) -> np.ndarray:
    """Return the rate of every trial, ordered by trial index.

    The result does not depend on the number of threads.

    :param scenario: Scenario to simulate.
    :param trials: Number of trials.
    :param seed: Campaign seed.
    :param threads: Number of worker threads, all cores if None.
    :return: Rates in bits/s/Hz.
    """
    if trials < 1:
        msg = "At least one trial is required"
        raise DomainError(msg)
    model = LinkModel(scenario)
    n_jobs = effective_n_jobs(-1 if threads is None else threads)
    chunk = math.ceil(trials / (n_jobs * CHUNKS_PER_WORKER))
    logger.debug(
        "Sample %d trials of %s in chunks of %d",
        trials,
        scenario.strategy.value,
        chunk,
    )
    parts = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_chunk_rates)(model, seed, start, min(start + chunk, trials))
        for start in range(0, trials, chunk)
    )
    return np.concatenate(parts)


@dataclass(frozen=True)
class RateEstimate:
    """Store a Monte Carlo mean rate."""

    #: Mean rate in bits/s/Hz
    mean: float
    #: Number of trials
    trials: int
    #: Half width of the 95 % confidence interval
    half_width_95: float

    @classmethod
    def from_rates(cls, rates: np.ndarray) -> "RateEstimate":
        """Summarize per-trial rates."""
        std = float(np.std(rates, ddof=1)) if len(rates) > 1 else 0.0
        return cls(
            float(np.mean(rates)),
            len(rates),
            Z_95 * std / math.sqrt(len(rates)),
        )


def mean_rate(
    scenario: LinkScenario,
    trials: int,
    seed: int,
    threads: int | None = 1,
) -> RateEstimate:
    """Estimate the mean waterfilled rate of a scenario.

    :param scenario: Scenario to simulate.
    :param trials: Number of trials.
    :param seed: Campaign seed.
    :param threads: Number of worker threads.
    :return: Mean rate estimate.
    """
    rates = sample_rates(scenario, trials, seed, threads)
    return RateEstimate.from_rates(rates)


@dataclass(frozen=True)
class OutageEstimate:
    """Store a Monte Carlo outage probability."""

    #: Fraction of trials in outage
    probability: float
    #: Number of trials
    trials: int
    #: Half width of the normal approximation 95 % confidence interval
    half_width_95: float

    @classmethod
    def from_rates(
        cls,
        rates: np.ndarray,
        threshold: float,
    ) -> "OutageEstimate":
        """Count the trials whose rate is below `threshold`."""
        trials = len(rates)
        probability = np.count_nonzero(rates < threshold) / trials
        half_width = Z_95 * math.sqrt(probability * (1 - probability) / trials)
        return cls(probability, trials, half_width)

    @property
    def is_rare(self) -> bool:
        """Return True if the normal approximation is unreliable."""
        return self.probability < RARE_EVENT_PROBABILITY


def outage_fixed_rate(
    scenario: LinkScenario,
    q: float,
    trials: int,
    seed: int,
    threads: int | None = 1,
) -> OutageEstimate:
    """Estimate the probability that the rate falls below `q`.

    :param scenario: Scenario to simulate.
    :param q: Target rate in bits/s/Hz.
    :param trials: Number of trials.
    :param seed: Campaign seed.
    :param threads: Number of worker threads.
    :return: Outage estimate.
    """
    rates = sample_rates(scenario, trials, seed, threads)
    return OutageEstimate.from_rates(rates, q)


def outage_multiplexing(
    scenario: LinkScenario,
    r: float,
    trials: int,
    seed: int,
    threads: int | None = 1,
) -> OutageEstimate:
    """Estimate the outage against the rate `r log2(snr)`.

    :param scenario: Scenario to simulate.
    :param r: Nonnegative multiplexing gain.
    :param trials: Number of trials.
    :param seed: Campaign seed.
    :param threads: Number of worker threads.
    :return: Outage estimate.
    """
    if r < 0:
        msg = "Multiplexing gain must be nonnegative"
        raise DomainError(msg)
    threshold = r * math.log2(scenario.snr)
    return outage_fixed_rate(scenario, threshold, trials, seed, threads)


def q_outage_capacity(
    scenario: LinkScenario,
    q: float,
    trials: int,
    seed: int,
    threads: int | None = 1,
) -> float:
    """Return `q (1 - P_out(q))`.

    :param scenario: Scenario to simulate.
    :param q: Nonnegative target rate.
    :param trials: Number of trials.
    :param seed: Campaign seed.
    :param threads: Number of worker threads.
    :return: q-outage capacity in bits/s/Hz.
    """
    if q < 0:
        msg = "Target rate must be nonnegative"
        raise DomainError(msg)
    outage = outage_fixed_rate(scenario, q, trials, seed, threads)
    return q * (1 - outage.probability)


def q_outage_gain(
    scenario_a: LinkScenario,
    scenario_b: LinkScenario,
    q: float,
    trials: int,
    seed: int,
    threads: int | None = 1,
) -> float:
    """Return the q-outage capacity gain of `scenario_a` over `scenario_b`.

    Both scenarios are simulated with the same campaign seed.

    :param scenario_a: Scenario whose gain is measured.
    :param scenario_b: Reference scenario.
    :param q: Nonnegative target rate.
    :param trials: Number of trials.
    :param seed: Campaign seed.
    :param threads: Number of worker threads.
    :return: `q (P_out_b(q) - P_out_a(q))`.
    """
    outage_a = outage_fixed_rate(scenario_a, q, trials, seed, threads)
    outage_b = outage_fixed_rate(scenario_b, q, trials, seed, threads)
    return q * (outage_b.probability - outage_a.probability)


def q_outage_curve(
    scenario: LinkScenario,
    qs: list[float],
    trials: int,
    seed: int,
    threads: int | None = 1,
) -> list[tuple[float, float]]:
    """Return the q-outage capacity at every target rate of `qs`.

    :param scenario: Scenario to simulate.
    :param qs: Target rates.
    :param trials: Number of trials.
    :param seed: Campaign seed.
    :param threads: Number of worker threads.
    :return: Pairs (q, C(q)).
    """
    rates = sample_rates(scenario, trials, seed, threads)
    return [
        (q, q * (1 - OutageEstimate.from_rates(rates, q).probability))
        for q in qs
    ]


def optimal_q(curve: list[tuple[float, float]]) -> tuple[float, float]:
    """Return the pair (q*, C(q*)) maximizing the q-outage capacity.

    Ties keep the smallest q.
    """
    if not curve:
        msg = "Cannot maximize an empty q-outage curve"
        raise DomainError(msg)
    return max(curve, key=lambda point: (point[1], -point[0]))


@dataclass(frozen=True)
class DmtCurve:
    """Store a piecewise linear diversity multiplexing tradeoff."""

    #: Breakpoints (r, d) with r increasing and d decreasing to 0
    breakpoints: tuple[tuple[float, float], ...]

    @property
    def max_diversity(self) -> float:
        """Return the diversity gain at r = 0."""
        return self.breakpoints[0][1]

    @property
    def max_multiplexing(self) -> float:
        """Return the multiplexing gain where diversity reaches 0."""
        return self.breakpoints[-1][0]


def _merge_collinear(
    points: list[tuple[float, float]],
) -> tuple[tuple[float, float], ...]:
    """Drop duplicated points and interior points on a straight segment."""
    merged: list[tuple[float, float]] = []
    for point in points:
        if merged and math.isclose(merged[-1][0], point[0]):
            continue
        while len(merged) >= 2:
            (r0, d0), (r1, d1) = merged[-2], merged[-1]
            cross = (r1 - r0) * (point[1] - d0) - (d1 - d0) * (point[0] - r0)
            if abs(cross) > 1e-9 * max(1.0, abs(d0)):
                break
            merged.pop()
        merged.append(point)
    return tuple((float(r), float(d)) for r, d in merged)


def dmt_subset_selection(n_rx: int, n_tx: int, n_min: int) -> DmtCurve:
    """Return the optimal tradeoff of selecting `n_min` of many antennas.

    The last integer breakpoint `N` minimizes
    `(n_rx - eta)(n_tx - eta)/(n_min - eta)` over `0 <= eta < n_min`,
    ties keeping the smallest `eta`.

    :param n_rx: Number of receive antennas or effective ranks.
    :param n_tx: Number of transmit antennas or effective ranks.
    :param n_min: Number of selected streams.
    :return: Tradeoff curve.
    :raises DomainError: If `n_min` is not in [1..min(n_rx, n_tx)].
    """
    if not 1 <= n_min <= min(n_rx, n_tx):
        msg = f"Stream count {n_min} must be in [1..{min(n_rx, n_tx)}]"
        raise DomainError(msg)
    last = min(
        range(n_min),
        key=lambda eta: ((n_rx - eta) * (n_tx - eta) / (n_min - eta), eta),
    )
    points = [(r, (n_rx - r) * (n_tx - r)) for r in range(last + 1)]
    points.append((n_min, 0))
    return DmtCurve(_merge_collinear(points))


def dmt_mimo_fas(rank_rx: int, rank_tx: int, n_min: int) -> DmtCurve:
    """Return the tradeoff of MIMO-FAS from the correlation ranks.

    :param rank_rx: Effective rank of the receive correlation.
    :param rank_tx: Effective rank of the transmit correlation.
    :param n_min: Number of streams.
    :return: Tradeoff curve.
    """
    return dmt_subset_selection(rank_rx, rank_tx, n_min)


def dmt_antenna_selection(
    w1_rx: float,
    w2_rx: float,
    n_min: int,
    w1_tx: float | None = None,
    w2_tx: float | None = None,
) -> DmtCurve:
    """Return the tradeoff of antenna selection on a half wavelength grid.

    The transmit aperture defaults to the receive one. The stream count is
    capped by the number of antennas available.

    :param w1_rx: Receive aperture along dimension 1 in wavelengths.
    :param w2_rx: Receive aperture along dimension 2 in wavelengths.
    :param n_min: Number of streams.
    :param w1_tx: Transmit aperture along dimension 1.
    :param w2_tx: Transmit aperture along dimension 2.
    :return: Tradeoff curve.
    """
    w1_tx = w1_rx if w1_tx is None else w1_tx
    w2_tx = w2_rx if w2_tx is None else w2_tx
    if min(w1_rx, w2_rx, w1_tx, w2_tx) < 0:
        msg = "Apertures must be nonnegative"
        raise DomainError(msg)
    w_rx = half_wavelength_count(w1_rx) * half_wavelength_count(w2_rx)
    w_tx = half_wavelength_count(w1_tx) * half_wavelength_count(w2_tx)
    return dmt_subset_selection(w_rx, w_tx, min(n_min, w_rx, w_tx))


def dmt_traditional(n_rx: int, n_tx: int) -> DmtCurve:
    """Return the tradeoff of a traditional MIMO link.

    :param n_rx: Number of receive antennas.
    :param n_tx: Number of transmit antennas.
    :return: Tradeoff curve.
    """
    if n_rx < 1 or n_tx < 1:
        msg = "Antenna counts must be at least 1"
        raise DomainError(msg)
    points = [
        (r, (n_rx - r) * (n_tx - r)) for r in range(min(n_rx, n_tx) + 1)
    ]
    return DmtCurve(_merge_collinear(points))


def dmt_eval(curve: DmtCurve, r: float) -> float:
    """Interpolate the diversity gain of `curve` at multiplexing gain `r`.

    :param curve: Tradeoff curve.
    :param r: Multiplexing gain in [0, max multiplexing].
    :return: Diversity gain.
    :raises DomainError: If `r` is out of range.
    """
    rs, ds = zip(*curve.breakpoints, strict=True)
    if not rs[0] <= r <= rs[-1]:
        msg = f"Multiplexing gain {r} outside [{rs[0]}, {rs[-1]}]"
        raise DomainError(msg)
    return float(np.interp(r, rs, ds))
