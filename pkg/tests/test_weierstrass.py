import numpy as np
import pytest

from noidkit.core.weierstrass import (
    NoidParams,
    WeierstrassData,
    contour_integral,
    domain_epsilon,
    eval_g,
    eval_omega,
    flux_consistency,
    gauss_normal,
    horner,
    jorge_meeks,
    minimal_immersion,
    nondegeneracy_rank,
    periods,
)
from noidkit.errors import DegenerateInputError, InvalidInputError, PoleError


@pytest.fixture
def catenoid():
    """g = (1 + z) / (1 - z), omega = 2 (z - 1)^2 / z^2 dz."""
    return WeierstrassData(a=[1, 1], b=[-1, 1], ends=[0], scale=2)


class TestPolynomials:
    """Tests for data evaluation."""

    def test_horner_highest_degree_first(self):
        """Test z^2 + 2z + 3 at z = 2."""
        assert horner(np.array([1, 2, 3]), 2.0) == pytest.approx(11)

    def test_horner_broadcasts(self):
        """Test batched coefficients against one point."""
        coeffs = np.array([[1, 0], [0, 1]])

        assert np.allclose(horner(coeffs, 3.0), [3, 1])

    def test_catenoid_data(self, catenoid):
        """Test g and omega of the catenoid data."""
        z = 0.3 + 0.2j

        assert catenoid.g(z) == pytest.approx((1 + z) / (1 - z))
        assert catenoid.omega(z) == pytest.approx(2 * (z - 1) ** 2 / z ** 2)

    def test_eval_g_at_b_root(self, catenoid):
        """Test g refuses the roots of B."""
        with pytest.raises(PoleError) as exc_info:
            eval_g(catenoid, 1.0)

        assert exc_info.value.kind == "b_root"

    def test_eval_omega_at_end(self, catenoid):
        """Test omega refuses the ends."""
        with pytest.raises(PoleError) as exc_info:
            eval_omega(catenoid, 0.0)

        assert exc_info.value.kind == "end"

    def test_gauss_normal(self):
        """Test the stereographic normal at g = 0, 1 and infinity."""
        assert np.allclose(gauss_normal(0), [0, 0, -1])
        assert np.allclose(gauss_normal(1), [1, 0, 0])
        assert np.allclose(gauss_normal(complex("inf")), [0, 0, 1])


class TestContourIntegral:
    """Tests for trapezoid contour quadrature."""

    def test_residue_of_simple_pole(self, settings):
        """Test the integral of 1/z around zero."""
        value = contour_integral(lambda z: 1 / z, 0j, 1.0, settings.quad_tol)

        assert value == pytest.approx(2j * np.pi)

    def test_holomorphic_integrand_vanishes(self):
        """Test the integral of exp(z) vanishes."""
        value = contour_integral(np.exp, 0.5, 0.3)

        assert abs(value) < 1e-12


class TestNoidParams:
    """Tests for parameter vectors."""

    def test_needs_three_ends(self):
        """Test n >= 3 is enforced."""
        with pytest.raises(InvalidInputError):
            NoidParams.constant([1, 0], [0, 1], [0, 1], truncation=2)

    def test_free_slots(self, trinoid):
        """Test there are 3n - 3 free parameters."""
        assert len(trinoid.free_slots()) == 3 * trinoid.n - 3
        assert trinoid.free_coefficients().shape == (6, trinoid.truncation + 1)

    def test_free_coefficients_roundtrip(self, trinoid):
        """Test writing back the free coefficients reproduces x."""
        copy = trinoid.with_free_coefficients(trinoid.free_coefficients())

        assert np.array_equal(copy.coefficient_array(), trinoid.coefficient_array())

    def test_duplicate_ends_rejected(self):
        """Test coinciding ends fail validation."""
        x = NoidParams.constant([1, 0, 0], [0, 0, 1], [1, 1, -1], truncation=2)

        with pytest.raises(DegenerateInputError, match="coincide"):
            x.validate()

    def test_common_root_rejected(self):
        """Test A and B sharing a root fail validation."""
        x = NoidParams.constant([1, 0, 0], [0, 1, 0], [1, 2j, -1], truncation=2)

        with pytest.raises(DegenerateInputError, match="share"):
            x.validate()

    def test_domain_epsilon(self):
        """Test epsilon is 1/16 of the smallest gap."""
        assert domain_epsilon(np.array([0, 1, 3])) == pytest.approx(1 / 16)


class TestPeriods:
    """Tests for periods and flux."""

    def test_catenoid_flux(self, catenoid, settings):
        """Test the catenoid has flux (8 pi, 0, 0) and necksize 4."""
        table = periods(catenoid, settings)

        assert np.allclose(table.flux[0], [8 * np.pi, 0, 0], atol=1e-9)
        assert table.necksizes[0] == pytest.approx(4.0)
        assert table.real_part_defect() < 1e-9

    def test_jorge_meeks_ends(self, trinoid):
        """Test the trinoid ends sit at the cube roots of unity."""
        ends = trinoid.at_zero().ends

        assert np.allclose(ends, np.exp(2j * np.pi * np.arange(3) / 3))
        assert trinoid.is_constant()

    def test_jorge_meeks_period_problem(self, trinoid, settings):
        """Test the trinoid passes the period test with equal necksizes."""
        table = periods(trinoid, settings)

        assert table.real_part_defect() < 1e-9 * max(1.0, float(np.max(np.abs(table.Q_all))))
        assert table.period_sum() < 1e-9
        assert np.ptp(table.necksizes) < 1e-9 * table.necksizes[0]

    def test_flux_along_limit_normals(self, trinoid, settings):
        """Test each flux is +-2 pi tau_i N0(p_i)."""
        assert np.max(flux_consistency(trinoid, periods(trinoid, settings))) < 1e-8

    def test_jorge_meeks_is_nondegenerate(self, trinoid, settings):
        """Test the period map has full rank 3n - 3."""
        rank, singular_values = nondegeneracy_rank(trinoid, settings)

        assert rank == 6
        assert singular_values.size == 6

    def test_jorge_meeks_needs_three_ends(self, settings):
        """Test the builtin refuses n < 3."""
        with pytest.raises(InvalidInputError):
            jorge_meeks(2, settings=settings)


class TestMinimalImmersion:
    """Tests for the Weierstrass integral."""

    def test_closed_loop_returns(self, catenoid):
        """Test the catenoid immersion closes around its end."""
        square = [0.5 + 0.5j, -0.5 + 0.5j, -0.5 - 0.5j, 0.5 - 0.5j, 0.5 + 0.5j]

        value = minimal_immersion(catenoid, square, np.zeros(3))

        assert np.allclose(value, 0, atol=1e-10)

    def test_start_value_is_offset(self, catenoid):
        """Test the start value shifts the result."""
        path = [0.5, 0.5 + 0.3j]

        base = minimal_immersion(catenoid, path)
        shifted = minimal_immersion(catenoid, path, np.array([1.0, 2.0, 3.0]))

        assert np.allclose(shifted - base, [1, 2, 3])
