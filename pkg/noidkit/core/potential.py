"""DPW potentials, gauges and coordinate charts.

Every potential and gauge is evaluated pointwise on the samples of a
CircleGrid: ``sample(z)`` returns an array of shape (K, 2, 2), where z is a
scalar or one point per lambda sample (lambda-dependent charts).
``evaluate(z)`` re-expands the samples into a LoopMatrix.
"""

import logging
from abc import ABC, abstractmethod
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from noidkit.config import Settings, get_settings
from noidkit.core.loop_algebra import (
    CircleGrid,
    LaurentLoop,
    LoopMatrix,
    det2,
    expm_traceless,
    inv_unimodular,
)
from noidkit.core.weierstrass import (
    NoidParams,
    WeierstrassData,
    domain_epsilon,
    horner_derivative,
)
from noidkit.errors import (
    BranchError,
    GaugeError,
    InvalidBasepointError,
    InvalidRegionError,
    NoRealSolutionError,
    PoleError,
)

logger = logging.getLogger(__name__)

A0 = np.array([[0.0, 0.5], [0.5, 0.0]])


def spectral_mu(t: float, lam: np.ndarray) -> np.ndarray:
    """mu(t, lambda) = t (lambda - 1)^2 / (4 lambda)."""
    return t * (lam - 1) ** 2 / (4 * lam)


class Potential(ABC):
    """dz-coefficient of a potential on the spectral circle grid."""

    def __init__(self, grid: CircleGrid, rho: float):
        self.grid = grid
        self.rho = rho

    @abstractmethod
    def sample(self, z) -> np.ndarray:
        """Values at z, shape (K, 2, 2)."""

    def poles(self) -> np.ndarray:
        return np.zeros(0, dtype=complex)

    def evaluate(self, z) -> LoopMatrix:
        return LoopMatrix.from_samples(self.sample(z), self.grid, self.rho)


class Gauge(ABC):
    """Holomorphic map z -> Lambda_+ SL(2, C) on the grid."""

    def __init__(self, grid: CircleGrid, rho: float):
        self.grid = grid
        self.rho = rho

    @abstractmethod
    def sample(self, z) -> np.ndarray:
        """Values at z, shape (K, 2, 2)."""

    def singularities(self) -> np.ndarray:
        return np.zeros(0, dtype=complex)

    def derivative(self, z) -> np.ndarray:
        """dG/dz by the Cauchy integral on a small circle."""
        return contour_derivative(self.sample, z, self.singularities())

    def evaluate(self, z) -> LoopMatrix:
        return LoopMatrix.from_samples(self.sample(z), self.grid, self.rho, det_tag=True)


def contour_derivative(func: Callable, z, singularities: np.ndarray, nodes: int = 32) -> np.ndarray:
    """Derivative of a holomorphic matrix function, (1/2 pi i) oint f(w) / (w - z)^2 dw."""
    z = np.asarray(z, dtype=complex)
    singular = np.asarray(singularities, dtype=complex).ravel()
    spread = float(np.min(np.abs(np.subtract.outer(z.ravel(), singular)))) if singular.size else 1.0
    radius = min(0.25, 0.25 * spread)
    total = 0.0
    for k in range(nodes):
        phase = np.exp(2j * np.pi * k / nodes)
        total = total + func(z + radius * phase) * np.conj(phase)
    return total / (nodes * radius)


# ---------------------------------------------------------------------------
# n-noid potential


class NoidPotential(Potential):
    """xi = [[0, mu(t, lambda) omega], [g', 0]] dz for parameters x."""

    kind = "nnoid"

    def __init__(self, t: float, x: NoidParams, grid: Optional[CircleGrid] = None,
                 settings: Optional[Settings] = None):
        grid = grid or CircleGrid(x.truncation)
        super().__init__(grid, x.rho)
        self.settings = settings or get_settings()
        self.t = float(t)
        self.x = x
        self.data: WeierstrassData = x.sampled(grid)
        self.mu = spectral_mu(self.t, grid.points)

    def poles(self) -> np.ndarray:
        central = self.x.at_zero()
        return np.concatenate([central.ends, central.b_roots()])

    def _check(self, z) -> None:
        tol = self.settings.singular_tol
        if np.min(np.abs(np.asarray(z)[..., None] - self.data.ends)) <= tol:
            raise PoleError(f"potential has a pole at the end z = {z}", location=complex(np.ravel(z)[0]), kind="end")
        if np.min(np.abs(self.data.B(z))) <= tol:
            raise PoleError(f"potential has a pole at a root of B, z = {z}",
                            location=complex(np.ravel(z)[0]), kind="b_root")

    def sample(self, z) -> np.ndarray:
        self._check(z)
        out = np.zeros((self.grid.size, 2, 2), dtype=complex)
        out[:, 0, 1] = self.mu * self.data.omega(z)
        out[:, 1, 0] = self.data.dg(z)
        return out

    def g(self, z) -> np.ndarray:
        return self.data.g(z)

    def phi0(self, z) -> np.ndarray:
        """Closed-form t = 0 frame [[g, 1], [-1, 0]] at z."""
        out = np.zeros((self.grid.size, 2, 2), dtype=complex)
        out[:, 0, 0] = self.data.g(z)
        out[:, 0, 1] = 1.0
        out[:, 1, 0] = -1.0
        return out

    def eta(self, z) -> np.ndarray:
        """[[g omega, g^2 omega], [-omega, -g omega]], regular at the roots of B."""
        out = np.empty((self.grid.size, 2, 2), dtype=complex)
        g_omega = self.data.g_power_omega(z, 1)
        out[:, 0, 0] = g_omega
        out[:, 0, 1] = self.data.g_power_omega(z, 2)
        out[:, 1, 0] = -self.data.g_power_omega(z, 0)
        out[:, 1, 1] = -g_omega
        return out

    def regularized(self) -> "RegularizedNoidPotential":
        return RegularizedNoidPotential(self)


class RegularizedNoidPotential(Potential):
    """Closed form of the n-noid potential gauged by [[1/g, -1], [0, g]].

    [[0, mu g^2 omega], [g^-2 dg, 0]], holomorphic at the roots of B.
    """

    kind = "gauged"

    def __init__(self, base: NoidPotential):
        super().__init__(base.grid, base.rho)
        self.base = base

    def poles(self) -> np.ndarray:
        central = self.base.x.at_zero()
        return np.concatenate([central.ends, central.a_roots()])

    def sample(self, z) -> np.ndarray:
        data = self.base.data
        A = data.A(z)
        if np.min(np.abs(A)) <= self.base.settings.singular_tol:
            raise InvalidRegionError(f"regularized potential needs A(z) != 0, z = {z}", location=z)
        out = np.zeros((self.grid.size, 2, 2), dtype=complex)
        out[:, 0, 1] = self.base.mu * data.g_power_omega(z, 2)
        numerator = horner_derivative(data.a, z) * data.B(z) - A * horner_derivative(data.b, z)
        out[:, 1, 0] = numerator / A ** 2
        return out


def xi_nnoid(t: float, x: NoidParams, z: complex, grid: Optional[CircleGrid] = None) -> LoopMatrix:
    """The n-noid potential at z as a matrix loop."""
    return NoidPotential(t, x, grid).evaluate(z)


def initial_condition(x: NoidParams, z0: complex, grid: Optional[CircleGrid] = None,
                      settings: Optional[Settings] = None) -> LoopMatrix:
    """phi_0 = [[g_x(z0, lambda), 1], [-1, 0]]."""
    settings = settings or get_settings()
    grid = grid or CircleGrid(x.truncation)
    data = x.sampled(grid)
    if np.min(np.abs(data.B(z0))) <= settings.singular_tol:
        raise InvalidBasepointError(f"basepoint {z0} is a pole of g", location=z0)
    if np.min(np.abs(z0 - data.ends)) <= settings.singular_tol:
        raise InvalidBasepointError(f"basepoint {z0} is an end", location=z0)
    values = np.zeros((grid.size, 2, 2), dtype=complex)
    values[:, 0, 0] = data.g(z0)
    values[:, 0, 1] = 1.0
    values[:, 1, 0] = -1.0
    return LoopMatrix.from_samples(values, grid, x.rho, det_tag=True)


def choose_basepoint(x: NoidParams) -> tuple[complex, bool]:
    """z0 = 0 unless singular, else an offset of the end centroid; flag marks the heuristic choice."""
    central = x.at_zero()
    eps = domain_epsilon(central.ends)
    roots = central.b_roots()

    def clear(z: complex) -> bool:
        off_ends = np.min(np.abs(z - central.ends)) > 8 * eps
        off_roots = roots.size == 0 or np.min(np.abs(z - roots)) > 2 * eps
        return bool(off_ends and off_roots)

    if clear(0j):
        return 0j, False
    centroid = complex(np.mean(central.ends))
    for k in range(1, 64):
        candidate = centroid + k * eps * np.exp(1j * np.pi * k / 7)
        if clear(candidate):
            logger.warning("basepoint z0 = 0 is singular; using %s", candidate)
            return candidate, True
    raise InvalidBasepointError("no admissible basepoint found near the end centroid", location=centroid)


# ---------------------------------------------------------------------------
# Delaunay potential


class RSPair(NamedTuple):
    r: float
    s: float
    boundary: bool


def rs_solve(u: float) -> RSPair:
    """Solve r + s = 1/2, rs = u with r <= s."""
    discriminant = 1 - 16 * u
    if discriminant < -1e-15:
        raise NoRealSolutionError(f"rs = {u} exceeds 1/16, no real (r, s)", value=u)
    if abs(discriminant) <= 1e-15:
        return RSPair(0.25, 0.25, True)
    root = np.sqrt(discriminant)
    return RSPair((1 - root) / 4, (1 + root) / 4, False)


class DelaunayPotential(Potential):
    """xi = [[0, r/lambda + s], [r lambda + s, 0]] dz / z."""

    kind = "delaunay"

    def __init__(self, r: float, s: float, grid: CircleGrid, rho: float = 2.0):
        super().__init__(grid, rho)
        self.r = r
        self.s = s
        lam = grid.points
        self.residue = np.zeros((grid.size, 2, 2), dtype=complex)
        self.residue[:, 0, 1] = r / lam + s
        self.residue[:, 1, 0] = r * lam + s

    @classmethod
    def for_t(cls, t: float, grid: CircleGrid, rho: float = 2.0) -> "DelaunayPotential":
        pair = rs_solve(t)
        if pair.boundary:
            raise NoRealSolutionError("r = s: the Delaunay surface degenerates to a cylinder", value=t)
        return cls(pair.r, pair.s, grid, rho)

    def poles(self) -> np.ndarray:
        return np.zeros(1, dtype=complex)

    def sample(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if np.min(np.abs(z)) <= 1e-300:
            raise PoleError("Delaunay potential has a pole at z = 0", location=0j, kind="end")
        return self.residue / z[..., None, None]

    def frame(self, z: complex) -> np.ndarray:
        """exp(A_t log z) on the grid, principal log."""
        return expm_traceless(self.residue * np.log(complex(z)))


def xi_delaunay(t: float, z: complex, truncation: int = 32, rho: float = 2.0) -> LoopMatrix:
    return DelaunayPotential.for_t(t, CircleGrid(truncation), rho).evaluate(z)


# ---------------------------------------------------------------------------
# gauges


class ConstantGauge(Gauge):
    def __init__(self, values: np.ndarray, grid: CircleGrid, rho: float = 2.0):
        super().__init__(grid, rho)
        self.values = np.broadcast_to(np.asarray(values, dtype=complex), (grid.size, 2, 2))

    def sample(self, z) -> np.ndarray:
        return np.array(self.values)

    def derivative(self, z) -> np.ndarray:
        return np.zeros((self.grid.size, 2, 2), dtype=complex)


class FunctionGauge(Gauge):
    """Gauge from a callable z -> (K, 2, 2); derivative by contour differentiation."""

    def __init__(self, func: Callable, grid: CircleGrid, rho: float = 2.0,
                 singular: Sequence[complex] = ()):
        super().__init__(grid, rho)
        self.func = func
        self._singular = np.asarray(singular, dtype=complex)

    def sample(self, z) -> np.ndarray:
        return self.func(z)

    def singularities(self) -> np.ndarray:
        return self._singular


class RegularityGauge(Gauge):
    """G = [[1/g, -1], [0, g]] near a root of B where A does not vanish."""

    def __init__(self, x: NoidParams, grid: Optional[CircleGrid] = None, settings: Optional[Settings] = None):
        grid = grid or CircleGrid(x.truncation)
        super().__init__(grid, x.rho)
        self.settings = settings or get_settings()
        self.data = x.sampled(grid)
        self._singular = np.concatenate([x.at_zero().a_roots(), x.at_zero().b_roots()])

    def singularities(self) -> np.ndarray:
        return self._singular

    def _g(self, z) -> np.ndarray:
        A = self.data.A(z)
        if np.min(np.abs(A)) <= self.settings.singular_tol:
            raise InvalidRegionError(f"regularity gauge undefined where A = 0 (z = {z})", location=z)
        return A / self.data.B(z)

    def sample(self, z) -> np.ndarray:
        g = self._g(z)
        out = np.zeros((self.grid.size, 2, 2), dtype=complex)
        out[:, 0, 0] = 1 / g
        out[:, 0, 1] = -1.0
        out[:, 1, 1] = g
        return out

    def derivative(self, z) -> np.ndarray:
        g = self._g(z)
        dg = self.data.dg(z)
        out = np.zeros((self.grid.size, 2, 2), dtype=complex)
        out[:, 0, 0] = -dg / g ** 2
        out[:, 1, 1] = dg
        return out


def regularity_gauge(x: NoidParams, z: complex, grid: Optional[CircleGrid] = None) -> LoopMatrix:
    return RegularityGauge(x, grid).evaluate(z)


def branch_sqrt(w, cut_angle: float = np.pi) -> np.ndarray:
    """sqrt with its cut along the ray arg(w) = cut_angle; principal for cut_angle = pi."""
    w = np.asarray(w, dtype=complex)
    arg = _cut_relative_angle(w, cut_angle) + cut_angle - np.pi
    return np.sqrt(np.abs(w)) * np.exp(0.5j * arg)


def _cut_relative_angle(w: np.ndarray, cut_angle: float) -> np.ndarray:
    """Angle in (-pi, pi] that jumps exactly across the ray arg(w) = cut_angle."""
    return np.angle(w * np.exp(-1j * (cut_angle - np.pi)))


def choose_cut(points: Sequence[complex]) -> float:
    """Cut direction through the widest angular gap of a path around 0."""
    angles = np.sort(np.angle(np.asarray(points, dtype=complex)))
    if angles.size == 0:
        return float(np.pi)
    gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]]))
    k = int(np.argmax(gaps))
    if gaps[k] <= 1e-9:
        raise BranchError("path winds around the branch point; no admissible cut", cut_angle=None)
    return float(angles[k] + 0.5 * gaps[k])


def check_branch(points: Sequence[complex], cut_angle: float) -> None:
    """Raise BranchError if consecutive path points straddle the cut."""
    relative = _cut_relative_angle(np.asarray(points, dtype=complex), cut_angle)
    if np.any(np.abs(np.diff(relative)) > np.pi):
        raise BranchError(f"path crosses the square-root cut at angle {cut_angle:.4f}", cut_angle=cut_angle)


class EndGauge(Gauge):
    """G(w) = [[k/sqrt(w), -1/(2k sqrt(w))], [0, sqrt(w)/k]] with k in W^{>=0}."""

    def __init__(self, k: np.ndarray, grid: CircleGrid, rho: float = 2.0, cut_angle: float = np.pi):
        super().__init__(grid, rho)
        self.k = np.broadcast_to(np.asarray(k, dtype=complex), (grid.size,))
        self.cut_angle = cut_angle

    def singularities(self) -> np.ndarray:
        return np.zeros(1, dtype=complex)

    def sample(self, w) -> np.ndarray:
        root = branch_sqrt(w, self.cut_angle)
        if np.min(np.abs(root)) == 0:
            raise GaugeError("end gauge is singular at w = 0", location=0j)
        k = self.k
        out = np.zeros((self.grid.size, 2, 2), dtype=complex)
        out[:, 0, 0] = k / root
        out[:, 0, 1] = -1 / (2 * k * root)
        out[:, 1, 1] = root / k
        return out

    def derivative(self, w) -> np.ndarray:
        root = branch_sqrt(w, self.cut_angle)
        w = np.asarray(w, dtype=complex)
        k = self.k
        out = np.zeros((self.grid.size, 2, 2), dtype=complex)
        out[:, 0, 0] = -k / (2 * w * root)
        out[:, 0, 1] = 1 / (4 * k * w * root)
        out[:, 1, 1] = 1 / (2 * k * root)
        return out


def end_gauge(w: complex, k: LaurentLoop, cut_angle: float = np.pi) -> LoopMatrix:
    grid = CircleGrid(k.truncation)
    return EndGauge(k.samples(grid), grid, k.rho, cut_angle).evaluate(w)


class ProductGauge(Gauge):
    """G1 G2 with the product rule for dG."""

    def __init__(self, first: Gauge, second: Gauge):
        super().__init__(first.grid, first.rho)
        self.first = first
        self.second = second

    def singularities(self) -> np.ndarray:
        return np.concatenate([self.first.singularities(), self.second.singularities()])

    def sample(self, z) -> np.ndarray:
        return self.first.sample(z) @ self.second.sample(z)

    def derivative(self, z) -> np.ndarray:
        return self.first.derivative(z) @ self.second.sample(z) + self.first.sample(z) @ self.second.derivative(z)


class InverseGauge(Gauge):
    def __init__(self, gauge: Gauge):
        super().__init__(gauge.grid, gauge.rho)
        self.gauge = gauge

    def singularities(self) -> np.ndarray:
        return self.gauge.singularities()

    def sample(self, z) -> np.ndarray:
        return inv_unimodular(self.gauge.sample(z))

    def derivative(self, z) -> np.ndarray:
        inverse = self.sample(z)
        return -inverse @ self.gauge.derivative(z) @ inverse


class GaugedPotential(Potential):
    """xi . G = G^-1 xi G + G^-1 dG."""

    kind = "gauged"

    def __init__(self, base: Potential, gauge: Gauge):
        super().__init__(base.grid, base.rho)
        self.base = base
        self.gauge = gauge

    def poles(self) -> np.ndarray:
        return np.concatenate([self.base.poles(), self.gauge.singularities()])

    def sample(self, z) -> np.ndarray:
        G = self.gauge.sample(z)
        det = det2(G)
        if not np.all(np.isfinite(G)) or np.min(np.abs(det)) <= 1e-14:
            raise GaugeError(f"gauge is not invertible at z = {z}", location=z)
        G_inv = inv_unimodular(G)
        return G_inv @ self.base.sample(z) @ G + G_inv @ self.gauge.derivative(z)


def gauge_apply(xi: Potential, gauge: Gauge) -> GaugedPotential:
    return GaugedPotential(xi, gauge)


# ---------------------------------------------------------------------------
# coordinate changes


class ChartPotential(Potential):
    """Pullback of a potential by z = chart(w); chart returns (z, dz/dw) per sample."""

    kind = "chart"

    def __init__(self, base: Potential, chart: Callable, singular: Sequence[complex] = ()):
        super().__init__(base.grid, base.rho)
        self.base = base
        self.chart = chart
        self._singular = np.asarray(singular, dtype=complex)

    def poles(self) -> np.ndarray:
        return self._singular

    def sample(self, w) -> np.ndarray:
        z, dz = self.chart(w)
        return self.base.sample(z) * np.asarray(dz)[..., None, None]


def mobius_chart(p: complex, q: complex) -> Callable:
    """w = z / (p z + q) as a chart z -> (w, dw/dz)."""

    def chart(z):
        z = np.asarray(z, dtype=complex)
        return z / (p * z + q), q / (p * z + q) ** 2

    return chart


class EndChart:
    """Inverse of w = g(z) - g(p_i) near the end p_i, per lambda sample."""

    def __init__(self, potential: NoidPotential, index: int, radius: Optional[float] = None):
        self.potential = potential
        self.index = index
        data = potential.data
        self.end = data.ends[:, index]
        self.g_end = data.g(self.end)
        self.dg_end = data.dg(self.end)
        if np.min(np.abs(self.dg_end)) <= 1e-12:
            raise InvalidRegionError(f"g is not locally invertible at end {index + 1}", location=complex(self.end[0]))
        self.radius = radius or domain_epsilon(potential.x.at_zero().ends)

    def __call__(self, w):
        data = self.potential.data
        w = np.broadcast_to(np.asarray(w, dtype=complex), self.end.shape)
        z = self.end + w / self.dg_end
        for _ in range(60):
            step = (data.g(z) - self.g_end - w) / data.dg(z)
            z = z - step
            if np.max(np.abs(step)) <= 1e-15 * max(1.0, float(np.max(np.abs(z)))):
                break
        else:
            raise InvalidRegionError(f"w-coordinate not invertible at w = {w[0]} near end {self.index + 1}",
                                     location=complex(w[0]))
        if np.max(np.abs(z - self.end)) > self.radius:
            raise InvalidRegionError(f"w = {w[0]} leaves the end neighborhood", location=complex(w[0]))
        return z, 1 / data.dg(z)
