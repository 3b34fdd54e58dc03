"""Select the active ports of a MIMO fluid antenna link."""

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum, unique

import numpy as np
import scipy.linalg as sla

from .beamforming import waterfill_rates
from .channel import SELECTION_STREAM, TrialSeed
from .errors import (
    CombinationLimitError,
    DomainError,
    InfeasibleSelectionError,
    NumericalRankError,
)
from .geometry import SurfaceGeometry, port_positions

#: Create logger for this file.
logger = logging.getLogger()

#: Largest number of port combinations the exhaustive search accepts.
DEFAULT_COMBO_LIMIT: int = 1_000_000

#: Default minimum distance between greedily selected ports.
DEFAULT_SEPARATION: float = 0.5

#: Omega must exceed 1 by this margin to trigger a swap.
SWAP_TOLERANCE: float = 1e-9

#: Relative smallest singular value below which S1 is singular.
SINGULAR_TOLERANCE: float = 1e-12


@unique
class Strategy(Enum):
    """Enumerate all port selection strategies."""

    #: Exhaustive search of the best waterfilled rate
    OPTIMAL = "optimal"
    #: Strong rank revealing QR selection
    QR = "qr"
    #: Strongest rows and columns under a separation constraint
    GREEDY = "greedy"
    #: Uniformly random ports
    RANDOM = "random"
    #: Traditional MIMO with fixed antennas, all active
    MIMO = "mimo"
    #: Antenna selection over a half wavelength grid
    MIMO_AS = "mimo-as"


@unique
class SwapCriterion(Enum):
    """Enumerate the formulas used to score column swaps."""

    #: Sum of three terms
    ADDITIVE = "additive"
    #: Exact ratio of the singular value products before and after a swap
    DET_RATIO = "det-ratio"


@dataclass(frozen=True)
class SelectionResult:
    """Store the active ports of both sides as 0-based matrix indices."""

    #: Active transmit ports, sorted
    tx_ports: tuple[int, ...]
    #: Active receive ports, sorted
    rx_ports: tuple[int, ...]

    def __post_init__(self) -> None:
        """Sort the ports and check they are distinct."""
        for name in ("tx_ports", "rx_ports"):
            ports = tuple(sorted(int(port) for port in getattr(self, name)))
            if len(set(ports)) != len(ports):
                msg = f"Duplicated port in {name}"
                raise DomainError(msg)
            object.__setattr__(self, name, ports)

    @classmethod
    def full(cls, n_tx: int, n_rx: int) -> "SelectionResult":
        """Return the selection of every port."""
        return cls(tuple(range(n_tx)), tuple(range(n_rx)))


@dataclass
class RrqrState:
    """Store a column permuted QR factorization split in two blocks.

    With `R = [[S1, S2], [0, S3]]`, the first `n` permuted columns form
    the active block.
    """

    #: Column permutation, active block first
    permutation: np.ndarray
    #: Orthonormal factor
    q: np.ndarray
    #: Upper triangular factor
    r: np.ndarray
    #: Size of the active block
    n: int

    @property
    def s1(self) -> np.ndarray:
        """Return the active triangular block."""
        return self.r[: self.n, : self.n]

    @property
    def s2(self) -> np.ndarray:
        """Return the coupling block."""
        return self.r[: self.n, self.n :]

    @property
    def s3(self) -> np.ndarray:
        """Return the residual block."""
        return self.r[self.n :, self.n :]

    @property
    def active(self) -> tuple[int, ...]:
        """Return the sorted original indices of the active columns."""
        return tuple(sorted(int(k) for k in self.permutation[: self.n]))


def pivoted_qr(M: np.ndarray, n: int | None = None) -> RrqrState:
    """Factorize `M` with column pivoting by largest remaining norm.

    :param M: Matrix to factorize.
    :param n: Size of the active block, the smallest dimension by default.
    :return: Factorization state.
    """
    M = np.asarray(M)
    q, r, permutation = sla.qr(M, mode="economic", pivoting=True)
    return RrqrState(permutation, q, r, min(M.shape) if n is None else n)


def _refactor(M: np.ndarray, permutation: np.ndarray, n: int) -> RrqrState:
    """Factorize `M` for a given column permutation without pivoting."""
    q, r = sla.qr(M[:, permutation], mode="economic")
    return RrqrState(permutation, q, r, n)


def omega_matrix(
    state: RrqrState,
    criterion: SwapCriterion = SwapCriterion.DET_RATIO,
) -> np.ndarray:
    """Score every swap between an active and an inactive column.

    :param state: Factorization state.
    :param criterion: Swap formula.
    :return: Nonnegative matrix of shape (n, N - n).
    :raises NumericalRankError: If the active block is singular.
    """
    s1 = state.s1
    singular_values = np.linalg.svd(s1, compute_uv=False)
    if (
        singular_values.size == 0
        or singular_values[-1] <= SINGULAR_TOLERANCE * singular_values[0]
    ):
        msg = "Active block of the factorization is singular"
        raise NumericalRankError(msg)

    s1_inv = np.linalg.pinv(s1)
    coupling = np.abs(s1_inv @ state.s2) ** 2
    residual = np.zeros(coupling.shape[1])
    if state.s3.size:
        residual = np.linalg.norm(state.s3, axis=0) ** 2
    inverse_rows = np.linalg.norm(s1_inv, axis=1) ** 2

    if criterion is SwapCriterion.ADDITIVE:
        return np.sqrt(coupling + residual[None, :] + inverse_rows[:, None])
    return np.sqrt(coupling + np.outer(inverse_rows, residual))


@dataclass(frozen=True)
class RrqrResult:
    """Store the outcome of a strong rank revealing column selection."""

    #: Sorted original indices of the selected columns
    columns: tuple[int, ...]
    #: Number of swaps performed
    swaps: int
    #: True if the swap budget was exhausted
    truncated: bool = False
    #: Active column sets, initial one first, then after each swap
    history: tuple[tuple[int, ...], ...] = field(default=())


def _append_by_residual(
    M: np.ndarray,
    selected: list[int],
    count: int,
) -> list[int]:
    """Append columns by descending norm of their residual.

    The residual is taken against the span of the selected columns, ties
    are broken by descending column norm then by index.
    """
    basis = sla.orth(M[:, selected]) if selected else np.zeros((len(M), 0))
    residual = M - basis @ (basis.conj().T @ M)
    residual_norms = np.round(np.linalg.norm(residual, axis=0), 12)
    norms = np.linalg.norm(M, axis=0)
    order = np.lexsort((np.arange(M.shape[1]), -norms, -residual_norms))
    remaining = [int(k) for k in order if k not in selected]
    return selected + remaining[:count]


def rrqr_select_columns(
    M: np.ndarray,
    n: int,
    criterion: SwapCriterion = SwapCriterion.DET_RATIO,
    max_swaps: int | None = None,
) -> RrqrResult:
    """Select `n` columns of `M` with a strong rank revealing QR.

    Starting from a column pivoted factorization, the pair of active and
    inactive columns with the largest score above 1 is swapped until no
    such pair remains or the swap budget is exhausted.

    :param M: Matrix of shape (m, N).
    :param n: Number of columns to select.
    :param criterion: Swap formula.
    :param max_swaps: Swap budget, 10 n (N - n) by default.
    :return: Selected columns with swap statistics.
    :raises DomainError: If `n` is not in [1..N].
    """
    M = np.asarray(M)
    n_rows, n_cols = M.shape
    if not 1 <= n <= n_cols:
        msg = f"Cannot select {n} columns out of {n_cols}"
        raise DomainError(msg)
    if n == n_cols:
        columns = tuple(range(n_cols))
        return RrqrResult(columns, 0, history=(columns,))

    active = min(n, n_rows)
    if max_swaps is None:
        max_swaps = 10 * active * (n_cols - active)

    state = pivoted_qr(M, active)
    history = [state.active]
    swaps = 0
    truncated = False
    while True:
        omega = omega_matrix(state, criterion)
        k, l = np.unravel_index(np.argmax(omega), omega.shape)
        if omega[k, l] <= 1 + SWAP_TOLERANCE:
            break
        if swaps >= max_swaps:
            truncated = True
            logger.debug("Swap budget of %d exhausted", max_swaps)
            break
        permutation = state.permutation.copy()
        permutation[[k, active + l]] = permutation[[active + l, k]]
        state = _refactor(M, permutation, active)
        swaps += 1
        history.append(state.active)

    selected = list(state.active)
    if active < n:
        selected = _append_by_residual(M, selected, n - active)
    return RrqrResult(
        tuple(sorted(selected)),
        swaps,
        truncated,
        tuple(history),
    )


def qr_mimo_fas_select(
    H: np.ndarray,
    n_tx: int,
    n_rx: int,
    criterion: SwapCriterion = SwapCriterion.DET_RATIO,
    max_swaps: int | None = None,
) -> SelectionResult:
    """Select ports with two successive rank revealing QR passes.

    Receive ports are the columns selected from `H^H`, transmit ports the
    columns selected from the rows of `H` kept at the receiver.

    :param H: Channel matrix of shape (N_rx, N_tx).
    :param n_tx: Number of active transmit ports.
    :param n_rx: Number of active receive ports.
    :param criterion: Swap formula.
    :param max_swaps: Swap budget per pass.
    :return: Selected ports.
    """
    H = np.asarray(H)
    rx = rrqr_select_columns(H.conj().T, n_rx, criterion, max_swaps)
    rows = H[list(rx.columns), :]
    tx = rrqr_select_columns(rows, n_tx, criterion, max_swaps)
    return SelectionResult(tx.columns, rx.columns)


def exhaustive_select(
    H: np.ndarray,
    n_tx: int,
    n_rx: int,
    snr: float,
    combo_limit: int = DEFAULT_COMBO_LIMIT,
) -> SelectionResult:
    """Search every port combination for the best waterfilled rate.

    Ties keep the lexicographically smallest port sets.

    :param H: Channel matrix of shape (N_rx, N_tx).
    :param n_tx: Number of active transmit ports.
    :param n_rx: Number of active receive ports.
    :param snr: Linear transmit SNR.
    :param combo_limit: Largest number of combinations accepted.
    :return: Selected ports.
    :raises CombinationLimitError: If too many combinations exist.
    """
    H = np.asarray(H)
    n_rx_total, n_tx_total = H.shape
    _check_counts(n_tx_total, n_rx_total, n_tx, n_rx)
    count = math.comb(n_tx_total, n_tx) * math.comb(n_rx_total, n_rx)
    if count > combo_limit:
        raise CombinationLimitError(count, combo_limit)

    tx_combos = np.array(
        list(itertools.combinations(range(n_tx_total), n_tx)),
    )
    best_rate = -np.inf
    best = None
    for rx in itertools.combinations(range(n_rx_total), n_rx):
        blocks = np.moveaxis(H[list(rx)][:, tx_combos], 1, 0)
        gains = np.linalg.svd(blocks, compute_uv=False) ** 2
        rates = waterfill_rates(gains, snr)
        index = int(np.argmax(rates))
        if rates[index] > best_rate:
            best_rate = rates[index]
            best = SelectionResult(tuple(tx_combos[index]), rx)
    return best


def _check_counts(
    n_tx_total: int,
    n_rx_total: int,
    n_tx: int,
    n_rx: int,
) -> None:
    """Raise if the active counts do not fit the available ports."""
    if not (1 <= n_tx <= n_tx_total and 1 <= n_rx <= n_rx_total):
        msg = (
            f"Cannot activate {n_tx}x{n_rx} ports out of "
            f"{n_tx_total}x{n_rx_total}"
        )
        raise DomainError(msg)


def _separated(
    order: np.ndarray,
    positions: np.ndarray,
    count: int,
    separation: float,
) -> list[int]:
    """Scan ports in `order`, skipping ports too close to a pick."""
    picked: list[int] = []
    for port in order:
        deltas = positions[picked] - positions[port]
        distances = np.linalg.norm(deltas, axis=1)
        if np.all(distances >= separation):
            picked.append(int(port))
            if len(picked) == count:
                break
    return picked


def _pick_separated(
    norms: np.ndarray,
    positions: np.ndarray,
    count: int,
    separation: float,
) -> tuple[int, ...]:
    """Pick ports by descending norm, skipping ports too close to a pick.

    :raises InfeasibleSelectionError: If fewer than `count` ports qualify.
    """
    order = np.argsort(-norms, kind="stable")
    picked = _separated(order, positions, count, separation)
    if len(picked) < count:
        msg = (
            f"Only {len(picked)} ports are {separation} wavelengths apart, "
            f"{count} requested"
        )
        raise InfeasibleSelectionError(msg)
    return tuple(picked)


def separated_port_count(
    geom: SurfaceGeometry,
    separation: float = DEFAULT_SEPARATION,
) -> int:
    """Count the ports packed in label order under a separation constraint.

    Greedy selection scans the ports by channel strength instead, so it may
    still pick fewer ports on a given realization.

    :param geom: Port geometry.
    :param separation: Minimum distance in wavelengths between picks.
    :return: Number of ports picked.
    """
    order = np.arange(geom.n_ports)
    picked = _separated(order, port_positions(geom), geom.n_ports, separation)
    return len(picked)


def greedy_select(
    H: np.ndarray,
    geom_tx: SurfaceGeometry,
    geom_rx: SurfaceGeometry,
    n_tx: int,
    n_rx: int,
    separation: float = DEFAULT_SEPARATION,
) -> SelectionResult:
    """Select the strongest rows then columns under a separation constraint.

    Transmit ports are ranked by their column norm over the selected
    receive rows.

    :param H: Channel matrix of shape (N_rx, N_tx).
    :param geom_tx: Transmit geometry.
    :param geom_rx: Receive geometry.
    :param n_tx: Number of active transmit ports.
    :param n_rx: Number of active receive ports.
    :param separation: Minimum distance in wavelengths between picks.
    :return: Selected ports.
    :raises InfeasibleSelectionError: If the constraint cannot be met.
    """
    H = np.asarray(H)
    _check_counts(H.shape[1], H.shape[0], n_tx, n_rx)
    rx = _pick_separated(
        np.linalg.norm(H, axis=1),
        port_positions(geom_rx),
        n_rx,
        separation,
    )
    tx = _pick_separated(
        np.linalg.norm(H[list(rx), :], axis=0),
        port_positions(geom_tx),
        n_tx,
        separation,
    )
    return SelectionResult(tx, rx)


def random_select(
    seed: TrialSeed,
    n_tx_total: int,
    n_rx_total: int,
    n_tx: int,
    n_rx: int,
) -> SelectionResult:
    """Select uniformly random distinct ports on both sides.

    :param seed: Trial seed.
    :param n_tx_total: Number of transmit ports.
    :param n_rx_total: Number of receive ports.
    :param n_tx: Number of active transmit ports.
    :param n_rx: Number of active receive ports.
    :return: Selected ports.
    """
    _check_counts(n_tx_total, n_rx_total, n_tx, n_rx)
    rng = seed.generator(SELECTION_STREAM)
    tx = rng.choice(n_tx_total, size=n_tx, replace=False)
    rx = rng.choice(n_rx_total, size=n_rx, replace=False)
    return SelectionResult(tuple(tx), tuple(rx))


def submatrix(H: np.ndarray, selection: SelectionResult) -> np.ndarray:
    """Return the rows and columns of `H` kept by `selection`.

    :param H: Channel matrix of shape (N_rx, N_tx).
    :param selection: Selected ports.
    :return: Matrix of shape (n_rx, n_tx).
    :raises DomainError: If a port is out of range.
    """
    H = np.asarray(H)
    ports = selection.rx_ports + selection.tx_ports
    if ports and (
        min(ports) < 0
        or max(selection.rx_ports, default=0) >= H.shape[0]
        or max(selection.tx_ports, default=0) >= H.shape[1]
    ):
        msg = f"Selection {selection} out of range for shape {H.shape}"
        raise DomainError(msg)
    return H[np.ix_(selection.rx_ports, selection.tx_ports)]
