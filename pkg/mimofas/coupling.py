"""Model the mutual coupling between fluid antenna ports."""

import logging
from dataclasses import dataclass
from enum import Enum, unique

import numpy as np
from scipy import special

from .errors import DomainError, NumericalRankError
from .geometry import SurfaceGeometry, port_positions
from .selection import SelectionResult

#: Create logger for this file.
logger = logging.getLogger()

#: Free space wave impedance in ohms.
FREE_SPACE_IMPEDANCE: float = 376.73

#: Input impedance of a half wave dipole in ohms.
HALF_WAVE_DIPOLE_IMPEDANCE: complex = 73.08 + 42.21j


@unique
class Coupling(Enum):
    """Enumerate all mutual coupling models."""

    #: No coupling
    NONE = "none"
    #: Dipoles between active ports only
    LIQUID = "liquid"
    #: S-matrix over every port
    PIXEL = "pixel"


@dataclass(frozen=True)
class DipoleSpec:
    """Describe the dipole radiating at every active port."""

    #: Dipole length in wavelengths
    length: float = 0.5
    #: Dipole width in wavelengths
    width: float = 0.001
    #: Antenna impedance Z_A in ohms
    antenna_impedance: complex = HALF_WAVE_DIPOLE_IMPEDANCE
    #: Load impedance Z_L in ohms, conjugate of Z_A by default
    load_impedance: complex | None = None

    @property
    def load(self) -> complex:
        """Return the load impedance actually used."""
        if self.load_impedance is None:
            return complex(np.conj(self.antenna_impedance))
        return self.load_impedance


@dataclass(frozen=True)
class CouplingMatrices:
    """Store the coupling matrices of both sides."""

    #: Receive coupling matrix
    rx: np.ndarray
    #: Transmit coupling matrix
    tx: np.ndarray


@dataclass(frozen=True)
class SMatrixModel:
    """Describe the S-matrix of an RF pixel surface.

    Scales left to None are derived so the largest scaled magnitudes hit
    the return loss and isolation levels.
    """

    #: Return loss in dB, as a positive number
    return_loss_db: float = 15.0
    #: Isolation in dB, as a positive number
    isolation_db: float = 30.0
    #: Reference impedance in ohms
    z0: float = 50.0
    #: Scale of the diagonal entries
    return_loss_scale: float | None = None
    #: Scale of the off-diagonal entries
    isolation_scale: float | None = None


def dipole_mutual_impedance(
    distance: float | np.ndarray,
    spec: DipoleSpec | None = None,
) -> complex | np.ndarray:
    """Return the mutual impedance of two side by side half wave dipoles.

    The induced EMF closed form is used; a null distance gives the
    antenna impedance.

    :param distance: Center spacing in wavelengths.
    :param spec: Dipole description.
    :return: Mutual impedance in ohms.
    :raises DomainError: If a distance is negative.
    """
    spec = spec or DipoleSpec()
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        msg = "Dipole spacing must be nonnegative"
        raise DomainError(msg)

    spaced = np.where(d > 0, d, 1.0)
    root = np.sqrt(4 * spaced**2 + 1)
    si0, ci0 = special.sici(2 * np.pi * spaced)
    si1, ci1 = special.sici(np.pi * (root + 1))
    si2, ci2 = special.sici(np.pi * (root - 1))
    scale = FREE_SPACE_IMPEDANCE / (4 * np.pi)
    resistance = scale * (2 * ci0 - ci1 - ci2)
    reactance = -scale * (2 * si0 - si1 - si2)
    result = np.where(
        d > 0,
        resistance + 1j * reactance,
        spec.antenna_impedance,
    )
    return complex(result) if result.ndim == 0 else result


def impedance_matrix(
    positions: np.ndarray,
    spec: DipoleSpec | None = None,
) -> np.ndarray:
    """Return the symmetric impedance matrix of dipoles at `positions`.

    :param positions: Array of shape (n, 3) in wavelengths.
    :param spec: Dipole description.
    :return: Matrix with Z_A on the diagonal.
    """
    spec = spec or DipoleSpec()
    deltas = positions[:, None, :] - positions[None, :, :]
    Z = dipole_mutual_impedance(np.linalg.norm(deltas, axis=-1), spec)
    Z = np.atleast_2d(Z)
    np.fill_diagonal(Z, spec.antenna_impedance)
    return Z


def coupling_matrix(
    Z: np.ndarray,
    spec: DipoleSpec | None = None,
) -> np.ndarray:
    """Return `(Z_A + Z_L) (Z + Z_L I)^-1`.

    :param Z: Impedance matrix.
    :param spec: Dipole description.
    :return: Coupling matrix.
    :raises NumericalRankError: If `Z + Z_L I` is singular.
    """
    spec = spec or DipoleSpec()
    loaded = Z + spec.load * np.eye(len(Z))
    try:
        inverse = np.linalg.inv(loaded)
    except np.linalg.LinAlgError as error:
        msg = "Loaded impedance matrix is singular"
        raise NumericalRankError(msg) from error
    return (spec.antenna_impedance + spec.load) * inverse


def liquid_coupling(
    selection: SelectionResult,
    geom_rx: SurfaceGeometry,
    geom_tx: SurfaceGeometry,
    spec: DipoleSpec | None = None,
) -> CouplingMatrices:
    """Return the coupling between the active ports of a liquid antenna.

    :param selection: Active ports.
    :param geom_rx: Receive geometry.
    :param geom_tx: Transmit geometry.
    :param spec: Dipole description.
    :return: Coupling matrices of shape (n_rx, n_rx) and (n_tx, n_tx).
    """
    rx = port_positions(geom_rx)[list(selection.rx_ports)]
    tx = port_positions(geom_tx)[list(selection.tx_ports)]
    return CouplingMatrices(
        coupling_matrix(impedance_matrix(rx, spec), spec),
        coupling_matrix(impedance_matrix(tx, spec), spec),
    )


def z_to_s(Z: np.ndarray, z0: float = 50.0) -> np.ndarray:
    """Convert an impedance matrix to an S-matrix.

    :param Z: Impedance matrix.
    :param z0: Reference impedance in ohms.
    :return: `(Z - z0 I)(Z + z0 I)^-1`.
    :raises DomainError: If `Z + z0 I` is singular.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    identity = np.eye(len(Z))
    try:
        return (Z - z0 * identity) @ np.linalg.inv(Z + z0 * identity)
    except np.linalg.LinAlgError as error:
        msg = "Z + z0 I is singular"
        raise DomainError(msg) from error


def s_to_z(S: np.ndarray, z0: float = 50.0) -> np.ndarray:
    """Convert an S-matrix to an impedance matrix.

    :param S: S-matrix.
    :param z0: Reference impedance in ohms.
    :return: `z0 (I + S)(I - S)^-1`.
    :raises DomainError: If `I - S` is singular.
    """
    S = np.atleast_2d(np.asarray(S, dtype=complex))
    identity = np.eye(len(S))
    try:
        return z0 * (identity + S) @ np.linalg.inv(identity - S)
    except np.linalg.LinAlgError as error:
        msg = "I - S is singular"
        raise DomainError(msg) from error


def _scale_to_level(values: np.ndarray, level_db: float) -> float:
    """Return the scale bringing the largest magnitude to -level_db dB."""
    largest = float(np.max(np.abs(values), initial=0.0))
    if largest == 0:
        return 1.0
    return 10 ** (-level_db / 20) / largest


def pixel_s_matrix(
    geom: SurfaceGeometry,
    model: SMatrixModel | None = None,
    spec: DipoleSpec | None = None,
) -> np.ndarray:
    """Return the scaled S-matrix of every port of an RF pixel surface.

    The baseline S-matrix is derived from the dipole impedance matrix of
    all ports, then its diagonal and off-diagonal entries are scaled.

    :param geom: Port geometry.
    :param model: S-matrix levels.
    :param spec: Dipole description.
    :return: Matrix of shape (N, N).
    """
    model = model or SMatrixModel()
    logger.debug("Build pixel S-matrix for %s", geom)
    S = z_to_s(impedance_matrix(port_positions(geom), spec), model.z0)
    diagonal = np.eye(len(S), dtype=bool)
    alpha_rl = model.return_loss_scale
    if alpha_rl is None:
        alpha_rl = _scale_to_level(S[diagonal], model.return_loss_db)
    alpha_iso = model.isolation_scale
    if alpha_iso is None:
        alpha_iso = _scale_to_level(S[~diagonal], model.isolation_db)
    return np.where(diagonal, alpha_rl * S, alpha_iso * S)


def pixel_coupling(
    geom: SurfaceGeometry,
    model: SMatrixModel | None = None,
    spec: DipoleSpec | None = None,
) -> np.ndarray:
    """Return the coupling matrix of every port of an RF pixel surface.

    :param geom: Port geometry.
    :param model: S-matrix levels.
    :param spec: Dipole description.
    :return: Matrix of shape (N, N).
    """
    model = model or SMatrixModel()
    Z = s_to_z(pixel_s_matrix(geom, model, spec), model.z0)
    return coupling_matrix(Z, spec)


def _apply(
    H: np.ndarray,
    matrices: CouplingMatrices,
) -> np.ndarray:
    """Return `C_rx H C_tx` after checking the dimensions."""
    H = np.asarray(H)
    if matrices.rx.shape != (H.shape[0],) * 2 or matrices.tx.shape != (
        H.shape[1],
    ) * 2:
        msg = (
            f"Coupling shapes {matrices.rx.shape} and {matrices.tx.shape} "
            f"do not match channel {H.shape}"
        )
        raise DomainError(msg)
    return matrices.rx @ H @ matrices.tx


def apply_coupling_liquid(
    H: np.ndarray,
    matrices: CouplingMatrices,
) -> np.ndarray:
    """Distort the selected subchannel by the active port coupling.

    :param H: Selected channel of shape (n_rx, n_tx).
    :param matrices: Liquid coupling matrices.
    :return: Coupled channel.
    """
    return _apply(H, matrices)


def apply_coupling_pixel(
    H: np.ndarray,
    matrices: CouplingMatrices,
) -> np.ndarray:
    """Distort the full channel by the coupling of every port.

    :param H: Full channel of shape (N_rx, N_tx).
    :param matrices: Pixel coupling matrices.
    :return: Coupled channel.
    """
    return _apply(H, matrices)
