"""Manage port geometry and spatial correlation of a fluid antenna surface."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
from scipy import special

from .errors import DomainError

#: Create logger for this file.
logger = logging.getLogger()

#: Default eigenvalue threshold used to estimate the rank.
DEFAULT_RANK_THRESHOLD: float = 1e-3

#: Default relative residual to declare a column linearly dependent.
DEFAULT_REDUCTION_TOLERANCE: float = 1e-8

#: Smallest eigenvalue tolerated for a positive semidefinite matrix.
EIGENVALUE_TOLERANCE: float = -1e-10


@dataclass(frozen=True)
class SurfaceGeometry:
    """Store the port grid of one side of the link.

    Lengths are expressed in wavelengths.
    """

    #: Number of ports along dimension 1
    n1: int
    #: Number of ports along dimension 2
    n2: int
    #: Aperture length along dimension 1
    w1: float = 0.0
    #: Aperture length along dimension 2
    w2: float = 0.0

    def __post_init__(self) -> None:
        """Check the grid counts and apertures."""
        if self.n1 < 1 or self.n2 < 1:
            msg = "Port counts must be at least 1"
            raise DomainError(msg)
        if self.w1 < 0 or self.w2 < 0:
            msg = "Apertures must be nonnegative"
            raise DomainError(msg)

    @property
    def n_ports(self) -> int:
        """Return the total number of ports."""
        return self.n1 * self.n2

    def spacing(self) -> tuple[float, float]:
        """Return the port spacing along each dimension.

        A single port along a dimension has a spacing of 0.

        :return: Spacing along dimension 1 and dimension 2.
        """
        d1 = self.w1 / (self.n1 - 1) if self.n1 > 1 else 0.0
        d2 = self.w2 / (self.n2 - 1) if self.n2 > 1 else 0.0
        return d1, d2


class PortIndex(NamedTuple):
    """Label a port by its linear index and its grid coordinates."""

    #: Linear label in [1..N]
    linear: int
    #: Grid coordinates (k1, k2), 1-based
    coords: tuple[int, int]


def _check_coords(geom: SurfaceGeometry, coords: tuple[int, int]) -> None:
    """Raise if `coords` lies outside the grid of `geom`.

    :param geom: Port geometry.
    :param coords: Grid coordinates (k1, k2), 1-based.
    :raises DomainError: If coordinates are out of range.
    """
    k1, k2 = coords
    if not (1 <= k1 <= geom.n1 and 1 <= k2 <= geom.n2):
        msg = f"Port coordinates {coords} out of range for {geom}"
        raise DomainError(msg)


def map_index(geom: SurfaceGeometry, coords: tuple[int, int]) -> PortIndex:
    """Map grid coordinates to the linear port label.

    The convention is `linear = (k2 - 1) * n1 + k1`.

    :param geom: Port geometry.
    :param coords: Grid coordinates (k1, k2), 1-based.
    :return: Port index.
    :raises DomainError: If coordinates are out of range.
    """
    _check_coords(geom, coords)
    k1, k2 = coords
    return PortIndex((k2 - 1) * geom.n1 + k1, (k1, k2))


def unmap_index(geom: SurfaceGeometry, linear: int) -> tuple[int, int]:
    """Map a linear port label back to its grid coordinates.

    :param geom: Port geometry.
    :param linear: Linear label in [1..N].
    :return: Grid coordinates (k1, k2), 1-based.
    :raises DomainError: If the label is out of range.
    """
    if not 1 <= linear <= geom.n_ports:
        msg = f"Port label {linear} out of range [1..{geom.n_ports}]"
        raise DomainError(msg)
    k2, k1 = divmod(linear - 1, geom.n1)
    return k1 + 1, k2 + 1


def port_position(
    geom: SurfaceGeometry,
    coords: tuple[int, int],
) -> np.ndarray:
    """Return the position of a port in wavelength units.

    :param geom: Port geometry.
    :param coords: Grid coordinates (k1, k2), 1-based.
    :return: Position [0, y, z] of the port.
    :raises DomainError: If coordinates are out of range.
    """
    _check_coords(geom, coords)
    k1, k2 = coords
    d1, d2 = geom.spacing()
    return np.array([0.0, (k2 - 1) * d2, (k1 - 1) * d1])


def port_positions(geom: SurfaceGeometry) -> np.ndarray:
    """Return the positions of all ports ordered by linear label.

    :param geom: Port geometry.
    :return: Array of shape (N, 3).
    """
    labels = np.arange(geom.n_ports)
    k2, k1 = np.divmod(labels, geom.n1)
    d1, d2 = geom.spacing()
    return np.column_stack(
        [np.zeros(geom.n_ports), k2 * d2, k1 * d1],
    )


def spherical_j0(x: float | np.ndarray) -> float | np.ndarray:
    """Evaluate the spherical Bessel function of the first kind, order 0.

    :param x: Argument.
    :return: sin(x)/x with value 1 at the origin.
    """
    return np.sinc(np.asarray(x) / np.pi)[()]


def bessel_j0(x: float | np.ndarray) -> float | np.ndarray:
    """Evaluate the Bessel function of the first kind, order 0.

    :param x: Argument.
    :return: J0(x).
    """
    return special.j0(x)


class CorrelationKernel(ABC):
    """Spatial correlation between two port positions."""

    @abstractmethod
    def __call__(
        self,
        position_a: np.ndarray,
        position_b: np.ndarray,
    ) -> float:
        """Return the correlation between two positions.

        :param position_a: First position in wavelengths.
        :param position_b: Second position in wavelengths.
        :return: Correlation in [-1, 1].
        """

    def matrix(self, positions: np.ndarray) -> np.ndarray:
        """Return the correlation of every pair of `positions`.

        :param positions: Array of shape (N, 3).
        :return: Matrix of shape (N, N).
        """
        n = len(positions)
        result = np.empty((n, n))
        for k in range(n):
            for l in range(k, n):
                result[k, l] = result[l, k] = self(positions[k], positions[l])
        return result


class IsotropicKernel(CorrelationKernel):
    """Correlation that depends only on the distance between ports."""

    def __call__(
        self,
        position_a: np.ndarray,
        position_b: np.ndarray,
    ) -> float:
        """Return the correlation between two positions."""
        distance = np.linalg.norm(np.subtract(position_a, position_b))
        return float(self.of_distance(distance))

    @abstractmethod
    def of_distance(self, distance: np.ndarray) -> np.ndarray:
        """Return the correlation at the given distances in wavelengths."""

    def matrix(self, positions: np.ndarray) -> np.ndarray:
        """Return the correlation of every pair of `positions`."""
        deltas = positions[:, None, :] - positions[None, :, :]
        return self.of_distance(np.linalg.norm(deltas, axis=-1))


class SphericalKernel(IsotropicKernel):
    """Rich scattering in 3D: j0(2*pi*d)."""

    def of_distance(self, distance: np.ndarray) -> np.ndarray:
        """Return j0(2*pi*d)."""
        return spherical_j0(2 * np.pi * np.asarray(distance))


class CylindricalKernel(IsotropicKernel):
    """Rich scattering in 2D: J0(2*pi*d)."""

    def of_distance(self, distance: np.ndarray) -> np.ndarray:
        """Return J0(2*pi*d)."""
        return bessel_j0(2 * np.pi * np.asarray(distance))


#: Kernels available by name.
_KERNELS: dict[str, CorrelationKernel] = {
    "3d-isotropic": SphericalKernel(),
    "2d-isotropic": CylindricalKernel(),
}

#: Kernel used when none is given.
DEFAULT_KERNEL: str = "3d-isotropic"


def register_kernel(name: str, kernel: CorrelationKernel) -> None:
    """Register a custom correlation `kernel` under `name`.

    :param name: Kernel identifier.
    :param kernel: Kernel implementation.
    """
    logger.debug("Register correlation kernel %s", name)
    _KERNELS[name] = kernel


def get_kernel(name: str) -> CorrelationKernel:
    """Return the kernel registered under `name`.

    :param name: Kernel identifier.
    :return: Kernel implementation.
    :raises DomainError: If no kernel has this name.
    """
    try:
        return _KERNELS[name]
    except KeyError as error:
        msg = f"Unknown correlation kernel {name}"
        raise DomainError(msg) from error


def kernel_names() -> list[str]:
    """Return the names of all registered kernels."""
    return sorted(_KERNELS)


def correlation_entry(
    geom: SurfaceGeometry,
    port_a: tuple[int, int],
    port_b: tuple[int, int],
    kernel: CorrelationKernel | None = None,
) -> float:
    """Return the spatial correlation between two ports.

    :param geom: Port geometry.
    :param port_a: Grid coordinates of the first port.
    :param port_b: Grid coordinates of the second port.
    :param kernel: Correlation kernel, 3D isotropic by default.
    :return: Correlation in [-1, 1].
    """
    kernel = kernel or get_kernel(DEFAULT_KERNEL)
    return kernel(port_position(geom, port_a), port_position(geom, port_b))


def build_correlation_matrix(
    geom: SurfaceGeometry,
    kernel: CorrelationKernel | None = None,
) -> np.ndarray:
    """Build the spatial correlation matrix of all ports.

    :param geom: Port geometry.
    :param kernel: Correlation kernel, 3D isotropic by default.
    :return: Symmetric matrix of shape (N, N) with unit diagonal.
    """
    kernel = kernel or get_kernel(DEFAULT_KERNEL)
    J = np.asarray(kernel.matrix(port_positions(geom)), dtype=float)
    J = np.clip((J + J.T) / 2, -1.0, 1.0)
    np.fill_diagonal(J, 1.0)
    return J


@dataclass(frozen=True)
class EigenDecomposition:
    """Store eigenvectors and descending eigenvalues of a correlation."""

    #: Orthonormal eigenvectors, one per column
    vectors: np.ndarray
    #: Eigenvalues sorted in descending order
    values: np.ndarray

    def reconstruct(self) -> np.ndarray:
        """Return U diag(values) U^T."""
        return (self.vectors * self.values) @ self.vectors.T


def eigendecompose(J: np.ndarray) -> EigenDecomposition:
    """Decompose a symmetric matrix with eigenvalues in descending order.

    Ties keep the order returned by the solver.

    :param J: Symmetric matrix.
    :return: Eigen decomposition.
    :raises DomainError: If `J` is not square and symmetric.
    """
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        msg = "Matrix to decompose must be square"
        raise DomainError(msg)
    if not np.allclose(J, J.T, rtol=0.0, atol=1e-12):
        msg = "Matrix to decompose must be symmetric"
        raise DomainError(msg)
    values, vectors = sla.eigh(J)
    order = np.argsort(-values, kind="stable")
    return EigenDecomposition(vectors[:, order], values[order])


@lru_cache(maxsize=64)
def correlation_eigen(
    geom: SurfaceGeometry,
    kernel_name: str = DEFAULT_KERNEL,
) -> EigenDecomposition:
    """Return the cached eigen decomposition of the correlation of `geom`.

    :param geom: Port geometry.
    :param kernel_name: Registered kernel name.
    :return: Eigen decomposition with read-only arrays.
    """
    logger.debug("Decompose correlation of %s with %s", geom, kernel_name)
    J = build_correlation_matrix(geom, get_kernel(kernel_name))
    eig = eigendecompose(J)
    eig.vectors.flags.writeable = False
    eig.values.flags.writeable = False
    return eig


@dataclass(frozen=True)
class RankEstimate:
    """Store the effective rank of a correlation matrix."""

    #: Number of eigenvalues above the threshold
    rank: int
    #: Sum of the discarded eigenvalues
    truncation_error: float
    #: Threshold used
    threshold: float


def estimate_rank(
    eig: EigenDecomposition,
    threshold: float = DEFAULT_RANK_THRESHOLD,
) -> RankEstimate:
    """Estimate the effective rank by truncating small eigenvalues.

    :param eig: Eigen decomposition with descending eigenvalues.
    :param threshold: Positive eigenvalue threshold.
    :return: Rank estimate, at least 1.
    :raises DomainError: If the threshold is not positive.
    """
    if threshold <= 0:
        msg = "Rank threshold must be positive"
        raise DomainError(msg)
    rank = max(int(np.count_nonzero(eig.values >= threshold)), 1)
    error = max(float(np.sum(eig.values[rank:])), 0.0)
    return RankEstimate(rank, error, threshold)


@dataclass(frozen=True)
class ReductionCertificate:
    """Prove that one column is a combination of retained columns.

    With `v~ = [coeffs; -1]`, the principal submatrix over
    `basis + (index,)` maps `v~` to (almost) zero.
    """

    #: Size l of the principal submatrix J^(l)
    level: int
    #: Combination coefficients v, of length l - 1
    coeffs: tuple[float, ...]
    #: Removed column
    index: int
    #: Retained columns the combination is made of
    basis: tuple[int, ...] = field(default=())

    def residual(self, J: np.ndarray) -> float:
        """Return the norm of J^(l) v~ for the original matrix `J`."""
        rows = [*self.basis, self.index]
        extended = np.append(np.asarray(self.coeffs), -1.0)
        return float(np.linalg.norm(J[np.ix_(rows, rows)] @ extended))


@dataclass(frozen=True)
class CorrelationReduction:
    """Store a full rank reduction of a correlation matrix."""

    #: Full rank principal submatrix over the retained ports
    reduced: np.ndarray
    #: Certificates in removal order
    certificates: tuple[ReductionCertificate, ...]
    #: Removed indices in removal order
    removed: tuple[int, ...]
    #: Retained indices in ascending order
    retained: tuple[int, ...]


def _certify(
    J: np.ndarray,
    retained: list[int],
    candidates: list[int],
) -> list[ReductionCertificate]:
    """Express each candidate column over all the retained columns.

    The coefficients solve the retained principal block, so the residual
    of a certificate is the Schur complement of its diagonal entry.

    :param J: Symmetric correlation matrix.
    :param retained: Retained indices in ascending order.
    :param candidates: Indices to certify.
    :return: One certificate per candidate, in the candidates order.
    """
    basis = tuple(retained)
    coeffs = sla.lstsq(
        J[np.ix_(basis, basis)],
        J[np.ix_(basis, candidates)],
    )[0]
    return [
        ReductionCertificate(
            level=len(basis) + 1,
            coeffs=tuple(float(value) for value in coeffs[:, column]),
            index=index,
            basis=basis,
        )
        for column, index in enumerate(candidates)
    ]


def reduce_correlation(
    J: np.ndarray,
    tol: float = DEFAULT_REDUCTION_TOLERANCE,
) -> CorrelationReduction:
    """Remove the columns that are combinations of the retained columns.

    The retained set starts from the numerical rank revealed by a column
    pivoted QR factorization. Every other column gets a certificate over
    the whole retained set and is kept instead when its residual exceeds
    `tol` times its norm. Columns are removed from the last one downward.

    :param J: Symmetric correlation matrix.
    :param tol: Relative residual to declare a dependency.
    :return: Reduced matrix with its certificates.
    :raises DomainError: If the tolerance is not positive.
    """
    if tol <= 0:
        msg = "Reduction tolerance must be positive"
        raise DomainError(msg)
    J = np.asarray(J, dtype=float)
    n = len(J)
    logger.debug("Reduce correlation matrix of size %d", n)

    triangular, pivots = sla.qr(J, mode="r", pivoting=True)
    magnitudes = np.abs(np.diag(triangular))
    rank = max(int(np.count_nonzero(magnitudes > tol * magnitudes[0])), 1)
    retained = sorted(int(index) for index in pivots[:rank])

    norms = np.linalg.norm(J, axis=0)
    while True:
        candidates = sorted(set(range(n)) - set(retained), reverse=True)
        if not candidates:
            certificates = []
            break
        certificates = _certify(J, retained, candidates)
        failing = [
            certificate.index
            for certificate in certificates
            if certificate.residual(J) > tol * norms[certificate.index]
        ]
        if not failing:
            break
        logger.debug("Keep %d columns failing certificates", len(failing))
        retained = sorted([*retained, *failing])

    logger.debug("Correlation matrix reduced to size %d", len(retained))
    return CorrelationReduction(
        reduced=J[np.ix_(retained, retained)],
        certificates=tuple(certificates),
        removed=tuple(certificate.index for certificate in certificates),
        retained=tuple(retained),
    )


def reconstruct_correlation(
    reduced: np.ndarray,
    certificates: tuple[ReductionCertificate, ...] | list,
    removed: tuple[int, ...] | list,
) -> np.ndarray:
    """Rebuild the full correlation matrix from its reduction.

    Certificates are replayed in reverse removal order: the new column is
    `j = J_sub v` and its diagonal entry is `j^T v`.

    :param reduced: Full rank reduced matrix.
    :param certificates: Certificates in removal order.
    :param removed: Removed indices in removal order.
    :return: Reconstructed matrix.
    :raises DomainError: If sizes or indices are inconsistent.
    """
    reduced = np.asarray(reduced, dtype=float)
    if len(certificates) != len(removed):
        msg = "One certificate is required per removed index"
        raise DomainError(msg)
    n = len(reduced) + len(removed)
    retained = sorted(set(range(n)) - set(removed))
    if len(retained) != len(reduced):
        msg = "Removed indices do not match the reduced matrix size"
        raise DomainError(msg)

    J = np.zeros((n, n))
    J[np.ix_(retained, retained)] = reduced
    known = set(retained)
    for certificate, index in zip(
        reversed(certificates),
        reversed(removed),
        strict=True,
    ):
        basis = list(certificate.basis)
        if (
            certificate.index != index
            or len(certificate.coeffs) != len(basis)
            or not known.issuperset(basis)
        ):
            msg = f"Certificate for index {index} is inconsistent"
            raise DomainError(msg)
        rows = sorted(known)
        coeffs = np.asarray(certificate.coeffs)
        column = J[np.ix_(rows, basis)] @ coeffs
        J[rows, index] = column
        J[index, rows] = column
        J[index, index] = J[basis, index] @ coeffs
        known.add(index)
    return J
