import numpy as np
import pytest

from noidkit.core.loop_algebra import CircleGrid
from noidkit.core.weierstrass import jorge_meeks, minimal_immersion
from noidkit.errors import InvalidInputError, PreconditionError, UndefinedGaussMapError
from noidkit.services.analysis_service import (
    BlowupLadder,
    axis_angle,
    blowup_error,
    blowup_weierstrass,
    catenoid_data,
    compact_samples,
    delaunay_axis,
    delaunay_blowup_error,
    delaunay_dbeta,
    delaunay_limit_frame,
    delaunay_monodromy,
    eigenvalue_square,
    end_alpha,
    end_frame_at_one,
    end_normal,
    end_report,
    fit_axis,
    limit_flux,
    loglog_slope,
    minimal_differential,
    noid_limit,
    richardson,
)
from noidkit.services.monodromy_service import SolutionPoint


@pytest.fixture
def delaunay_limit():
    """Blow-up limit of the Delaunay family."""
    return blowup_weierstrass(delaunay_limit_frame, delaunay_dbeta)


class TestBlowupLimit:
    """Tests for the Weierstrass data of the blow-up limit."""

    def test_delaunay_limit_is_catenoid(self, delaunay_limit):
        """Test g and omega of the Delaunay limit match the catenoid data."""
        catenoid = catenoid_data()
        z = 0.5 * np.exp(2j * np.pi * np.arange(50) / 50 + 0.1j) + 0.1j

        for value in z:
            assert abs(delaunay_limit.g(value) - catenoid.g(value)) <= 1e-12 * max(1.0, abs(catenoid.g(value)))
            assert abs(delaunay_limit.omega(value) - catenoid.omega(value)) <= 1e-12 * max(
                1.0, abs(catenoid.omega(value))
            )

    def test_catenoid_flux(self, delaunay_limit, settings):
        """Test the limit flux around 0 is (8 pi, 0, 0)."""
        flux = limit_flux(delaunay_limit, 0j, 0.5, settings)

        assert np.allclose(flux, [8 * np.pi, 0, 0], atol=1e-9)

    def test_undefined_gauss_map(self, delaunay_limit):
        """Test c = 0 at z = 1 is reported."""
        with pytest.raises(UndefinedGaussMapError):
            delaunay_limit.g(1.0)

    def test_noid_limit_reproduces_data(self, trinoid):
        """Test the n-noid t = 0 frame gives back g and omega."""
        limit = blowup_weierstrass(*noid_limit(trinoid))
        data = trinoid.at_zero()
        z = 0.3 - 0.2j

        assert limit.g(z) == pytest.approx(data.g(z))
        assert limit.omega(z) == pytest.approx(data.omega(z))


class TestLadders:
    """Tests for extrapolation helpers."""

    def test_loglog_slope(self):
        """Test the slope of 5 t^2 is 2."""
        t = np.array([1e-3, 2e-3, 4e-3])

        assert loglog_slope(t, 5 * t ** 2) == pytest.approx(2.0)
        assert np.isnan(loglog_slope([1e-3], [1.0]))

    def test_richardson(self):
        """Test the extrapolated value of a quadratic."""
        t = np.array([0.1, 0.2, 0.3])

        assert richardson(t, 1 + 2 * t + 3 * t ** 2) == pytest.approx(1.0)
        assert richardson([0.1], [4.0]) == 4.0

    def test_monotone(self):
        """Test errors must decrease towards t = 0."""
        ladder = BlowupLadder(np.array([0.1, 0.01]), np.array([1.0, 0.1]), np.zeros(2), 1.0, 1.0)
        rising = BlowupLadder(np.array([0.1, 0.01]), np.array([0.1, 1.0]), np.zeros(2), -1.0, 1.0)

        assert ladder.monotone
        assert not rising.monotone

    def test_blowup_needs_solved_points(self, trinoid, settings):
        """Test the comparison refuses unsolved or empty ladders."""
        with pytest.raises(PreconditionError):
            blowup_error([SolutionPoint(0.0, trinoid, 0.0, 0)], trinoid, [0.1], settings=settings)
        with pytest.raises(PreconditionError):
            blowup_error([SolutionPoint(0.01, trinoid, 1.0, 3)], trinoid, [0.1], settings=settings)

    def test_compact_samples(self, trinoid):
        """Test samples stay in the disk of half the distance to the ends."""
        samples = compact_samples(trinoid, 100)

        assert samples.size == 100
        assert np.max(np.abs(samples)) <= 0.5


class TestBlowupConvergence:
    """Tests for f_t / t converging to the limit minimal surface."""

    @pytest.fixture
    def samples(self, rng):
        """Points of the disk |z - 1| < 1/2, away from the basepoint."""
        r = rng.uniform(0.1, 0.5, 24)
        return 1.0 + r * np.exp(1j * rng.uniform(0.0, 2 * np.pi, 24))

    def test_delaunay_converges_to_catenoid(self, samples, settings):
        """Test the sup error of f_t / t and df_t / t decreases like t."""
        ladder = delaunay_blowup_error([4e-3, 2e-3, 1e-3], samples, truncation=8, settings=settings)

        assert ladder.monotone
        assert ladder.slope == pytest.approx(1.0, abs=0.3)
        assert ladder.differential_slope == pytest.approx(1.0, abs=0.3)
        assert np.all(np.diff(ladder.differential_errors) < 0)

    def test_delaunay_needs_nonzero_t(self, samples, settings):
        """Test a ladder of zeros is refused."""
        with pytest.raises(PreconditionError):
            delaunay_blowup_error([0.0], samples, truncation=4, settings=settings)


class TestMinimalDifferential:
    """Tests for the Weierstrass differential."""

    def test_matches_finite_difference(self):
        """Test dpsi against central differences of psi."""
        data = catenoid_data()
        z, h = 0.4 + 0.3j, 1e-5

        dx, dy = minimal_differential(data, z)
        fx = (minimal_immersion(data, [0.5, z + h]) - minimal_immersion(data, [0.5, z - h])) / (2 * h)
        fy = (minimal_immersion(data, [0.5, z + 1j * h]) - minimal_immersion(data, [0.5, z - 1j * h])) / (2 * h)

        assert np.allclose(dx, fx, atol=1e-6)
        assert np.allclose(dy, fy, atol=1e-6)


class TestEnds:
    """Tests for end diagnostics."""

    def test_alpha_index_checked(self, trinoid, settings):
        """Test end indices are range-checked."""
        with pytest.raises(InvalidInputError):
            end_alpha(0.0, trinoid, 3, settings)

    def test_alpha_constant_for_constant_data(self, trinoid, settings):
        """Test alpha does not vary in lambda for lambda-independent data."""
        alpha = end_alpha(0.0, trinoid, 0, settings)

        assert alpha.variation < 1e-10
        assert np.allclose(alpha.samples, alpha.value)

    def test_central_report(self, trinoid, settings):
        """Test the t = 0 ends have zero weight and a real Lambda^2."""
        report = end_report(0.0, trinoid, 0, settings=settings)

        assert report.kind == "catenoid"
        assert report.weight == 0
        assert report.eigenvalue_defect == 0
        assert report.axis_angle is None
        assert np.linalg.norm(report.axis_limit) == pytest.approx(1.0)

    def test_jorge_meeks_weights_agree(self, settings):
        """Test the symmetric trinoid has equal necksizes at every end."""
        x = jorge_meeks(3, 1.0, 2, settings.rho, settings)

        taus = [end_report(0.0, x, i, settings=settings).tau for i in range(3)]

        assert np.ptp(taus) < 1e-9 * taus[0]

    def test_eigenvalue_square_at_one(self):
        """Test Lambda^2 = 1/4 at lambda = 1."""
        assert eigenvalue_square(0.3, np.array([2.0]), np.array([1.0]))[0] == pytest.approx(0.25)

    def test_end_normal_at_pole_of_g(self):
        """Test the north pole where B vanishes at the end."""
        data = catenoid_data()

        assert np.allclose(end_normal(data, 1.0), [0, 0, 1])

    def test_fit_axis(self):
        """Test the fitted line of collinear points."""
        direction = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
        points = np.outer(np.linspace(-1, 1, 5), direction) + [0, 0, 3]

        centroid, axis = fit_axis(points)

        assert np.allclose(centroid, [0, 0, 3])
        assert axis_angle(axis, direction) < 1e-6

    def test_axis_angle(self):
        """Test angles between lines ignore orientation."""
        assert axis_angle(np.array([1.0, 0, 0]), np.array([-2.0, 0, 0])) == pytest.approx(0.0)
        assert axis_angle(np.array([1.0, 0, 0]), np.array([0, 3.0, 0])) == pytest.approx(90.0)


class TestDelaunay:
    """Tests for the Delaunay family."""

    def test_axis_of_identity(self):
        """Test Phi_0(1) = I has limit axis e1."""
        assert np.allclose(delaunay_axis(np.eye(2)), [1, 0, 0])

    def test_axis_of_singular_frame(self):
        """Test a singular Phi_0(1) is refused."""
        with pytest.raises(InvalidInputError):
            delaunay_axis(np.zeros((2, 2)))

    def test_end_frame_unimodular(self):
        """Test the gauged end frame has det 1."""
        assert np.linalg.det(end_frame_at_one(0.7 - 0.2j)) == pytest.approx(1.0)

    @pytest.mark.parametrize("t", [0.01, -0.01])
    def test_monodromy(self, t, settings):
        """Test M = exp(2 pi i A_t), M(1) = -I and dM/dlambda(1) = 0."""
        result = delaunay_monodromy(t, 16, settings=settings)

        assert result["closed_form"] < 1e-8
        assert result["value_at_one"] < 1e-8
        assert result["derivative_at_one"] < 1e-7

    def test_grid_samples_are_unimodular(self):
        """Test the limit frame has det 1."""
        z = np.array([0.5, 2.0, 1j])

        assert np.allclose(np.linalg.det(delaunay_limit_frame(z)), 1.0)
        assert CircleGrid(4).points[0] == 1
