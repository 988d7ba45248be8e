import numpy as np
import pytest

from noidkit.core.loop_algebra import CircleGrid, LoopMatrix, expm_traceless
from noidkit.core.paths import (
    LineSegment,
    Obstacle,
    PathSpec,
    circle_path,
    generator_loop,
    polyline,
    route,
    straight_path,
)
from noidkit.core.potential import DelaunayPotential, NoidPotential
from noidkit.core.transport import (
    integrate,
    integrate_samples,
    m_tilde,
    m_tilde_at_zero,
    monodromy,
    monodromy_samples,
    period_matrices,
    rescaled_monodromy,
)
from noidkit.core.weierstrass import domain_epsilon
from noidkit.errors import InvalidInputError, TransportError


class TestPaths:
    """Tests for path construction."""

    def test_circle_is_closed(self):
        """Test a circle path starts and ends at the same point."""
        path = circle_path(1.0, 0.5, theta0=0.3)

        assert path.loop
        assert abs(path.start - path.end) < 1e-14
        assert path.length == pytest.approx(np.pi)

    def test_disjoint_segments_refused(self):
        """Test segments must join."""
        with pytest.raises(TransportError):
            PathSpec((LineSegment(0, 1), LineSegment(2, 3)))

    def test_reversed(self):
        """Test reversal swaps the endpoints."""
        path = polyline([0, 1, 1 + 1j])

        back = path.reversed()

        assert back.start == path.end
        assert back.end == path.start

    def test_route_keeps_clear(self):
        """Test routed polylines stay out of the obstacle disks."""
        obstacle = Obstacle(0.5 + 0.01j, 0.1)

        points = route(0j, 1 + 0j, [obstacle])
        path = polyline(points)

        assert points[0] == 0 and points[-1] == 1
        assert path.clearance([obstacle.center]) >= 0.1 - 1e-12

    def test_clearance_validation(self):
        """Test a path through a singular point is refused."""
        with pytest.raises(TransportError):
            straight_path(-1, 1).validate([0j])

    def test_generator_basepoint_outside(self):
        """Test the basepoint may not lie inside the generator circle."""
        with pytest.raises(TransportError):
            generator_loop(0.95, 1.0, 0.1)

    def test_generator_loop(self):
        """Test the generator circle is centred on the end and starts on the approach."""
        loop = generator_loop(0j, 1.0, 0.25)

        assert abs(loop.q - 0.75) < 1e-14
        assert loop.full.loop
        assert abs(loop.full.start) < 1e-14


class TestDelaunayTransport:
    """Tests for transport against closed forms."""

    def test_straight_transport(self, settings):
        """Test Phi(z) = exp(A log z) along [1, 2]."""
        grid = CircleGrid(4)
        xi = DelaunayPotential.for_t(0.01, grid)
        start = np.broadcast_to(np.eye(2, dtype=complex), (grid.size, 2, 2)).copy()

        result = integrate_samples(xi, straight_path(1, 2), start, settings)

        assert np.max(np.abs(result.samples - xi.frame(2.0))) < 1e-8
        assert result.det_drift <= 1e-10

    def test_monodromy_around_zero(self, settings):
        """Test the monodromy around 0 is exp(2 pi i A) and M(1) = -I."""
        grid = CircleGrid(4)
        xi = DelaunayPotential.for_t(0.01, grid)
        start = np.broadcast_to(np.eye(2, dtype=complex), (grid.size, 2, 2)).copy()

        M = monodromy_samples(xi, circle_path(0j, 1.0), start, settings=settings)

        assert np.max(np.abs(M - expm_traceless(2j * np.pi * xi.residue))) < 1e-8
        assert grid.points[0] == 1
        assert np.allclose(M[0], -np.eye(2), atol=1e-8)

    def test_monodromy_keeps_determinant(self, settings):
        """Test det(Phi) drifts by at most 1e-10 around the loop."""
        grid = CircleGrid(4)
        xi = DelaunayPotential.for_t(0.01, grid)
        start = np.broadcast_to(np.eye(2, dtype=complex), (grid.size, 2, 2)).copy()

        result = integrate_samples(xi, circle_path(0j, 1.0), start, settings)

        assert settings.transport_det_tol == 1e-10
        assert result.det_drift <= 1e-10

    def test_drift_guard(self, settings):
        """Test transport raises once the drift exceeds the tolerance."""
        grid = CircleGrid(4)
        xi = DelaunayPotential.for_t(0.01, grid)
        start = np.broadcast_to(np.eye(2, dtype=complex), (grid.size, 2, 2)).copy()
        loose = settings.model_copy(update={"ode_tol": 1e-3, "transport_det_tol": 1e-14})

        with pytest.raises(TransportError):
            integrate_samples(xi, circle_path(0j, 1.0), start, loose)

    def test_monodromy_loop(self, settings):
        """Test monodromy returns a loop with det 1."""
        grid = CircleGrid(8)
        xi = DelaunayPotential.for_t(0.01, grid)

        M = monodromy(xi, circle_path(0j, 1.0), LoopMatrix.identity(8), settings)

        assert M.det_tag
        assert np.max(np.abs(M.coefficient(0) - M.samples(grid).mean(axis=0))) < 1e-12

    def test_integrate_returns_loop(self, settings):
        """Test integrate wraps integrate_samples as a matrix loop."""
        grid = CircleGrid(8)
        xi = DelaunayPotential.for_t(0.01, grid)

        phi = integrate(xi, straight_path(1, 1.5), LoopMatrix.identity(8), settings)

        assert phi.det_deviation() < 1e-8

    def test_open_path_has_no_monodromy(self, settings):
        """Test monodromy requires a closed path."""
        grid = CircleGrid(2)
        xi = DelaunayPotential.for_t(0.01, grid)

        with pytest.raises(InvalidInputError):
            monodromy(xi, straight_path(1, 2), LoopMatrix.identity(2), settings)

    def test_path_through_pole(self, settings):
        """Test transport refuses paths through a pole."""
        grid = CircleGrid(2)
        xi = DelaunayPotential.for_t(0.01, grid)
        start = np.broadcast_to(np.eye(2, dtype=complex), (grid.size, 2, 2)).copy()

        with pytest.raises(TransportError):
            integrate_samples(xi, straight_path(-1, 1), start, settings)


class TestRescaledMonodromy:
    """Tests for M~ of the n-noid family."""

    def test_limit_is_in_su2(self, trinoid, settings):
        """Test M~ at t = 0 solves the Monodromy Problem for the trinoid."""
        for i in range(2):
            M0 = m_tilde_at_zero(trinoid, i, settings=settings)

            assert M0.su2_algebra_defect() < 1e-9

    def test_small_t_tends_to_periods(self, trinoid, settings):
        """Test M~(t) approaches the period matrix as t -> 0."""
        grid = CircleGrid(trinoid.truncation)
        potential = NoidPotential(1e-6, trinoid, grid, settings)
        end = trinoid.at_zero().ends[0]
        generator = generator_loop(0j, end, 4 * domain_epsilon(trinoid.at_zero().ends))

        result = rescaled_monodromy(potential, generator, settings)
        periods = period_matrices(trinoid, grid, settings)[0]

        scale = max(1.0, float(np.max(np.abs(periods))))
        assert np.max(np.abs(result.m_tilde - periods)) < 1e-4 * scale

    def test_m_tilde_needs_nonzero_t(self):
        """Test synthetic division refuses t = 0."""
        with pytest.raises(InvalidInputError):
            m_tilde(0.0, LoopMatrix.identity(3))
