"""Unit tests for coupling."""

import numpy as np
import pytest

from mimofas.coupling import (
    HALF_WAVE_DIPOLE_IMPEDANCE,
    CouplingMatrices,
    DipoleSpec,
    SMatrixModel,
    apply_coupling_liquid,
    apply_coupling_pixel,
    coupling_matrix,
    dipole_mutual_impedance,
    impedance_matrix,
    liquid_coupling,
    pixel_coupling,
    pixel_s_matrix,
    s_to_z,
    z_to_s,
)
from mimofas.errors import DomainError, NumericalRankError
from mimofas.geometry import SurfaceGeometry
from mimofas.selection import SelectionResult


def test_mutual_impedance_at_half_wavelength() -> None:
    """Test two parallel half wave dipoles half a wavelength apart.

    It must match the tabulated mutual impedance.
    """
    impedance = dipole_mutual_impedance(0.5)
    assert impedance.real == pytest.approx(-12.5, abs=0.3)
    assert impedance.imag == pytest.approx(-29.9, abs=0.3)


def test_mutual_impedance_decays() -> None:
    """Test dipoles far apart.

    It must vanish with distance.
    """
    assert abs(dipole_mutual_impedance(50.0)) < 1.0
    assert abs(dipole_mutual_impedance(50.0)) < abs(
        dipole_mutual_impedance(5.0),
    )


def test_mutual_impedance_at_null_distance() -> None:
    """Test a null spacing.

    It must give the antenna impedance.
    """
    assert dipole_mutual_impedance(0.0) == HALF_WAVE_DIPOLE_IMPEDANCE


def test_mutual_impedance_negative_distance() -> None:
    """Test a negative spacing.

    It must raise a domain error.
    """
    with pytest.raises(DomainError, match="nonnegative"):
        dipole_mutual_impedance(-0.1)


def test_default_load_is_conjugate_match() -> None:
    """Test the default load impedance.

    It must be the conjugate of the antenna impedance.
    """
    assert DipoleSpec().load == np.conj(HALF_WAVE_DIPOLE_IMPEDANCE)
    assert DipoleSpec(load_impedance=50.0).load == 50.0


def test_impedance_matrix_is_symmetric() -> None:
    """Test the impedance matrix of a small grid.

    It must be symmetric with the antenna impedance on its diagonal.
    """
    positions = np.array([[0, 0, 0], [0, 0.3, 0], [0, 0.3, 0.4]])
    Z = impedance_matrix(positions)
    np.testing.assert_allclose(Z, Z.T)
    np.testing.assert_allclose(np.diag(Z), HALF_WAVE_DIPOLE_IMPEDANCE)
    assert Z[0, 2] == pytest.approx(dipole_mutual_impedance(0.5))


def test_far_field_coupling_is_identity() -> None:
    """Test dipoles 50 wavelengths apart.

    Their coupling matrix must be the identity within 1e-2.
    """
    positions = np.array([[0, 0, 0], [0, 50, 0], [0, 100, 0]], dtype=float)
    C = coupling_matrix(impedance_matrix(positions))
    assert np.max(np.abs(C - np.eye(3))) <= 1e-2


def test_coupling_matrix_singular() -> None:
    """Test an impedance cancelled by the load.

    It must raise a numerical rank error.
    """
    spec = DipoleSpec()
    with pytest.raises(NumericalRankError, match="singular"):
        coupling_matrix(-spec.load * np.eye(2), spec)


def test_s_and_z_round_trip() -> None:
    """Test the conversion of an impedance matrix to an S-matrix and back.

    It must give back the impedance matrix.
    """
    positions = np.array([[0, 0, 0], [0, 0.25, 0], [0, 0.5, 0.25]])
    Z = impedance_matrix(positions)
    np.testing.assert_allclose(s_to_z(z_to_s(Z)), Z, rtol=1e-10)
    S = z_to_s(Z, 75.0)
    np.testing.assert_allclose(z_to_s(s_to_z(S, 75.0), 75.0), S, atol=1e-10)


def test_scalar_conversion() -> None:
    """Test the conversion of a matched load.

    It must have no reflection.
    """
    np.testing.assert_allclose(z_to_s(50.0), [[0.0]])


def test_s_to_z_singular() -> None:
    """Test a total reflection.

    It must raise a domain error.
    """
    with pytest.raises(DomainError, match="singular"):
        s_to_z(np.eye(2))


def test_pixel_s_matrix_levels() -> None:
    """Test the scaled S-matrix of a pixel surface.

    Its largest entries must hit the return loss and isolation levels.
    """
    geom = SurfaceGeometry(2, 3, 0.5, 1.0)
    model = SMatrixModel(return_loss_db=15.0, isolation_db=30.0)
    S = pixel_s_matrix(geom, model)
    off_diagonal = S[~np.eye(6, dtype=bool)]
    assert np.max(np.abs(np.diag(S))) == pytest.approx(10 ** (-15 / 20))
    assert np.max(np.abs(off_diagonal)) == pytest.approx(10 ** (-30 / 20))


def test_pixel_s_matrix_fixed_scales() -> None:
    """Test explicit scales.

    It must scale the baseline S-matrix by them.
    """
    geom = SurfaceGeometry(1, 2, 0.0, 0.5)
    baseline = z_to_s(impedance_matrix(np.array([[0, 0, 0], [0, 0.5, 0]])))
    S = pixel_s_matrix(
        geom,
        SMatrixModel(return_loss_scale=0.5, isolation_scale=0.25),
    )
    np.testing.assert_allclose(np.diag(S), 0.5 * np.diag(baseline))
    assert S[0, 1] == pytest.approx(0.25 * baseline[0, 1])


def test_pixel_coupling_is_close_to_identity() -> None:
    """Test the coupling of a well isolated pixel surface.

    It must be a small perturbation of a scaled identity.
    """
    geom = SurfaceGeometry(2, 2, 0.5, 0.5)
    C = pixel_coupling(geom)
    assert C.shape == (4, 4)
    off_diagonal = C[~np.eye(4, dtype=bool)]
    assert np.max(np.abs(off_diagonal)) < np.min(np.abs(np.diag(C)))


def test_liquid_coupling_shapes() -> None:
    """Test the coupling of selected ports.

    It must have the size of the active port sets.
    """
    geom_rx = SurfaceGeometry(3, 3, 1.0, 1.0)
    geom_tx = SurfaceGeometry(3, 2, 1.0, 1.0)
    selection = SelectionResult((0, 5), (1, 4, 8))
    matrices = liquid_coupling(selection, geom_rx, geom_tx)
    assert matrices.rx.shape == (3, 3)
    assert matrices.tx.shape == (2, 2)
    H = np.ones((3, 2))
    np.testing.assert_allclose(
        apply_coupling_liquid(H, matrices),
        matrices.rx @ H @ matrices.tx,
    )


def test_apply_coupling_dimension_mismatch() -> None:
    """Test coupling matrices that do not fit the channel.

    It must raise a domain error.
    """
    matrices = CouplingMatrices(np.eye(3), np.eye(2))
    with pytest.raises(DomainError, match="do not match"):
        apply_coupling_pixel(np.ones((2, 2)), matrices)
