import numpy as np
import pytest

from noidkit.core.loop_algebra import CircleGrid
from noidkit.core.potential import (
    ConstantGauge,
    DelaunayPotential,
    GaugedPotential,
    NoidPotential,
    RegularityGauge,
    branch_sqrt,
    check_branch,
    choose_basepoint,
    choose_cut,
    initial_condition,
    mobius_chart,
    rs_solve,
    spectral_mu,
)
from noidkit.core.weierstrass import NoidParams
from noidkit.errors import BranchError, InvalidBasepointError, NoRealSolutionError, PoleError


class TestRSSolve:
    """Tests for the Delaunay (r, s) system."""

    @pytest.mark.parametrize("t", [1e-4, 1e-2, 0.05, -0.1])
    def test_solution(self, t):
        """Test r + s = 1/2 and rs = t with r <= s."""
        pair = rs_solve(t)

        assert pair.r + pair.s == pytest.approx(0.5)
        assert pair.r * pair.s == pytest.approx(t, abs=1e-15)
        assert pair.r <= pair.s
        assert not pair.boundary

    def test_boundary(self):
        """Test rs = 1/16 gives the cylinder r = s = 1/4."""
        pair = rs_solve(1 / 16)

        assert pair == (0.25, 0.25, True)

    def test_no_real_solution(self):
        """Test rs > 1/16 is refused."""
        with pytest.raises(NoRealSolutionError):
            rs_solve(0.07)

    def test_negative_t_is_nodoid(self):
        """Test r < 0 for negative t."""
        assert rs_solve(-0.01).r < 0

    def test_cylinder_potential_refused(self):
        """Test the Delaunay potential refuses the degenerate cylinder."""
        with pytest.raises(NoRealSolutionError):
            DelaunayPotential.for_t(1 / 16, CircleGrid(2))


class TestNoidPotential:
    """Tests for the n-noid potential."""

    def test_spectral_mu(self):
        """Test mu vanishes at lambda = 1 and is real on the circle."""
        lam = np.exp(1j * np.linspace(0.1, 6, 7))

        assert spectral_mu(0.3, 1.0) == 0
        assert np.allclose(spectral_mu(0.3, lam).imag, 0)

    def test_central_value(self, trinoid, settings):
        """Test xi = [[0, 0], [dg, 0]] at t = 0."""
        xi = NoidPotential(0.0, trinoid, settings=settings)
        z = 0.2 + 0.1j

        values = xi.sample(z)

        assert np.allclose(values[:, 0, 1], 0)
        assert np.allclose(values[:, 1, 0], trinoid.at_zero().dg(z))

    def test_phi0_solves_the_equation(self, trinoid, settings):
        """Test dPhi_0/dz = Phi_0 xi at t = 0 by a central difference."""
        xi = NoidPotential(0.0, trinoid, settings=settings)
        z, h = 0.3 - 0.2j, 1e-6

        derivative = (xi.phi0(z + h) - xi.phi0(z - h)) / (2 * h)

        assert np.allclose(derivative, xi.phi0(z) @ xi.sample(z), atol=1e-6)

    def test_pole_at_end(self, trinoid, settings):
        """Test the potential refuses the ends."""
        xi = NoidPotential(0.1, trinoid, settings=settings)

        with pytest.raises(PoleError) as exc_info:
            xi.sample(1.0)

        assert exc_info.value.kind == "end"

    def test_regularized_matches_gauge(self, trinoid, settings):
        """Test the closed-form regularized potential against gauging by [[1/g, -1], [0, g]]."""
        xi = NoidPotential(0.2, trinoid, settings=settings)
        gauged = GaugedPotential(xi, RegularityGauge(trinoid, xi.grid, settings))
        z = 0.4 + 0.3j

        assert np.allclose(gauged.sample(z), xi.regularized().sample(z), atol=1e-10)

    def test_constant_gauge_conjugates(self, trinoid, settings):
        """Test a constant gauge acts by conjugation."""
        xi = NoidPotential(0.2, trinoid, settings=settings)
        G = np.array([[2.0, 1.0], [1.0, 1.0]])
        z = -0.3 + 0.1j

        gauged = GaugedPotential(xi, ConstantGauge(G, xi.grid)).sample(z)

        assert np.allclose(gauged, np.linalg.inv(G) @ xi.sample(z) @ G)


class TestInitialCondition:
    """Tests for the basepoint and initial frame."""

    def test_initial_condition(self, trinoid, settings):
        """Test phi_0 = [[g(z0), 1], [-1, 0]] with det 1."""
        phi = initial_condition(trinoid, 0.1j, settings=settings)

        assert np.allclose(phi.at_zero(), [[trinoid.at_zero().g(0.1j), 1], [-1, 0]])
        assert phi.det_deviation() < 1e-14

    def test_basepoint_at_end(self, trinoid, settings):
        """Test an end is not a basepoint."""
        with pytest.raises(InvalidBasepointError):
            initial_condition(trinoid, 1.0, settings=settings)

    def test_default_basepoint(self, trinoid):
        """Test the trinoid uses z0 = 0."""
        assert choose_basepoint(trinoid) == (0j, False)

    def test_heuristic_basepoint(self):
        """Test a root of B at the origin moves the basepoint."""
        x = NoidParams.constant([1, 0, 1], [0, 1, 0], [-1, 1, 10], truncation=2)

        z0, heuristic = choose_basepoint(x)

        assert heuristic
        assert abs(z0) > 0.25


class TestBranchCuts:
    """Tests for square roots and their cuts."""

    def test_principal_branch(self):
        """Test the cut at pi is numpy's principal square root."""
        w = np.array([1 + 1j, -2 + 0.1j, 3j])

        assert np.allclose(branch_sqrt(w), np.sqrt(w))

    def test_rotated_cut_is_continuous_across_negative_axis(self):
        """Test a cut along the positive axis keeps sqrt continuous across the negative one."""
        above = branch_sqrt(-1 + 1e-9j, 0.0)
        below = branch_sqrt(-1 - 1e-9j, 0.0)

        assert abs(above - below) < 1e-6

    def test_choose_cut_avoids_points(self):
        """Test the cut lies in the widest gap of the path."""
        points = np.exp(1j * np.linspace(-0.5, 0.5, 20))

        assert abs(abs(choose_cut(points)) - np.pi) < 1e-9

    def test_crossing_detected(self):
        """Test a path crossing the cut raises."""
        with pytest.raises(BranchError):
            check_branch([-1 + 0.1j, -1 - 0.1j], np.pi)


class TestCharts:
    """Tests for coordinate changes."""

    def test_mobius_chart(self):
        """Test w = z / (p z + q) and its derivative."""
        chart = mobius_chart(0.5, 2.0)
        z = 0.3 + 0.1j

        w, dw = chart(z)

        assert w == pytest.approx(z / (0.5 * z + 2))
        assert dw == pytest.approx(2.0 / (0.5 * z + 2) ** 2)
