"""Blow-up limit, minimal-surface comparison and Delaunay-end diagnostics."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from noidkit.config import Settings, get_settings
from noidkit.core.iwasawa import phase_fixed_qr
from noidkit.core.loop_algebra import E3, CircleGrid, LoopMatrix, Su2Vector, expm_traceless, inv_unimodular
from noidkit.core.paths import circle_path
from noidkit.core.potential import (
    A0,
    ChartPotential,
    DelaunayPotential,
    EndChart,
    EndGauge,
    FunctionGauge,
    GaugedPotential,
    NoidPotential,
    Potential,
    mobius_chart,
    rs_solve,
)
from noidkit.core.transport import integrate_samples
from noidkit.core.weierstrass import (
    NoidParams,
    PeriodTable,
    WeierstrassData,
    contour_integral,
    domain_epsilon,
    gauss_normal,
    minimal_immersion,
    periods,
)
from noidkit.errors import InvalidInputError, PreconditionError, UndefinedGaussMapError
from noidkit.services.immersion_service import (
    DelaunayFrameSource,
    FrameSource,
    ImmersionService,
    NoidFrameSource,
)
from noidkit.services.meshing import ParameterMesh, SurfaceMesh, self_intersections
from noidkit.services.monodromy_service import SolutionPoint

logger = logging.getLogger(__name__)

H = np.array([[1.0, 1.0], [-1.0, 1.0]]) / np.sqrt(2.0)


def _map(settings: Settings, func: Callable, items: Sequence) -> list:
    if settings.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            return list(pool.map(func, items))
    return [func(item) for item in items]


# ---------------------------------------------------------------------------
# blow-up limit


class WeierstrassLimit(NamedTuple):
    """Gauss map and dz-coefficient of the Weierstrass form of the blow-up limit."""

    g: Callable
    omega: Callable


def blowup_weierstrass(phi0: Callable, dbeta: Callable, tol: float = 1e-12) -> WeierstrassLimit:
    """g = -a/c and omega = 4 c^2 dbeta for a lambda-independent frame [[a, b], [c, d]]."""

    def entries(z):
        frame = np.asarray(phi0(z), dtype=complex)
        c = frame[..., 1, 0]
        if np.min(np.abs(c)) <= tol:
            raise UndefinedGaussMapError(f"c vanishes at z = {z}; the Gauss map is undefined", location=z)
        return frame[..., 0, 0], c

    def g(z):
        a, c = entries(z)
        return -a / c

    def omega(z):
        _, c = entries(z)
        return 4 * c ** 2 * np.asarray(dbeta(z), dtype=complex)

    return WeierstrassLimit(g, omega)


def delaunay_limit_frame(z):
    """exp(A_0 log z) = (1 / 2 sqrt z) [[z + 1, z - 1], [z - 1, z + 1]]."""
    z = np.asarray(z, dtype=complex)
    root = np.sqrt(z)
    out = np.empty(z.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = out[..., 1, 1] = (z + 1) / (2 * root)
    out[..., 0, 1] = out[..., 1, 0] = (z - 1) / (2 * root)
    return out


def delaunay_dbeta(z):
    """d/dt of the lambda^-1 coefficient of the Delaunay potential at t = 0."""
    return 2 / np.asarray(z, dtype=complex)


def noid_limit(x0: NoidParams) -> tuple[Callable, Callable]:
    """Frame [[g, 1], [-1, 0]] and dbeta = omega / 4 of the n-noid family at t = 0."""
    data = x0.at_zero()

    def phi0(z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape + (2, 2), dtype=complex)
        out[..., 0, 0] = data.g(z)
        out[..., 0, 1] = 1.0
        out[..., 1, 0] = -1.0
        return out

    return phi0, lambda z: data.omega(z) / 4


def catenoid_data() -> WeierstrassData:
    """g = (1 + z) / (1 - z), omega = 2 ((z - 1) / z)^2 dz: the horizontal catenoid of waist radius 4."""
    return WeierstrassData(a=[1.0, 1.0], b=[-1.0, 1.0], ends=[0.0], scale=2.0)


def limit_flux(limit: WeierstrassLimit, center: complex, radius: float,
               settings: Optional[Settings] = None) -> np.ndarray:
    """Flux of the limit minimal surface around ``center``."""
    settings = settings or get_settings()
    rows = [
        contour_integral(
            lambda z, k=k: limit.g(z) ** k * limit.omega(z),
            center,
            radius,
            settings.quad_tol,
            settings.quad_min_nodes,
            settings.quad_max_nodes,
        )
        for k in range(3)
    ]
    return PeriodTable(P_all=np.array([rows]), radius=radius).flux[0]


@dataclass(frozen=True)
class BlowupLadder:
    """Distance of f_t / t (and df_t / t) to the minimal immersion along a t-ladder."""

    t: np.ndarray
    errors: np.ndarray
    differential_errors: np.ndarray
    slope: float
    differential_slope: float

    @property
    def monotone(self) -> bool:
        order = np.argsort(-np.abs(self.t))
        return bool(np.all(np.diff(self.errors[order]) < 0))


def loglog_slope(t: Sequence[float], values: Sequence[float]) -> float:
    t = np.abs(np.asarray(t, dtype=float))
    values = np.asarray(values, dtype=float)
    if t.size < 2:
        return float("nan")
    return float(np.polyfit(np.log(t), np.log(values), 1)[0])


def richardson(t: Sequence[float], values: Sequence[float]) -> float:
    """Value at t = 0 of the least-squares polynomial in t through the ladder (degree <= 2)."""
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if t.size == 1:
        return float(values[0])
    degree = min(t.size - 1, 2)
    return float(np.polyval(np.polyfit(t, values, degree), 0.0))


def compact_samples(x0: NoidParams, count: int = 200, z0: complex = 0j, seed: int = 0) -> np.ndarray:
    """Uniform points of the disk around z0 of half the distance to the nearest end."""
    ends = x0.at_zero().ends
    radius = 0.5 * float(np.min(np.abs(ends - z0)))
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, count))
    theta = rng.uniform(0.0, 2 * np.pi, count)
    return z0 + r * np.exp(1j * theta)


def minimal_differential(data: WeierstrassData, z: complex) -> tuple[np.ndarray, np.ndarray]:
    """dpsi(d/dx), dpsi(d/dy) of the Weierstrass representation."""
    g = data.g(z)
    om = data.omega(z)
    form = np.array([0.5 * (1 - g * g) * om, 0.5j * (1 + g * g) * om, g * om])
    return form.real, (1j * form).real


def _blowup_ladder(
    sources: Sequence[tuple[float, FrameSource]],
    data: WeierstrassData,
    samples: np.ndarray,
    z0: complex,
    settings: Settings,
) -> BlowupLadder:
    samples = np.asarray(samples, dtype=complex).ravel()

    def measure(item: tuple[float, FrameSource]) -> tuple[float, float]:
        t, source = item
        service = ImmersionService(source, settings)
        base = service.frame_at(z0).f / t
        worst, worst_d = 0.0, 0.0
        for z in samples:
            frame = service.frame_at(z)
            psi = minimal_immersion(data, [z0, z], base)
            worst = max(worst, float(np.linalg.norm(frame.f / t - psi)))
            df = service.differential(frame)
            dpsi = minimal_differential(data, z)
            for a, b in zip(df, dpsi):
                worst_d = max(worst_d, float(np.linalg.norm(a / t - b)))
        logger.info("blow-up at t=%g: sup error %.3e, differential %.3e", t, worst, worst_d)
        return worst, worst_d

    measured = np.array(_map(settings, measure, list(sources)))
    t = np.array([t for t, _ in sources])
    return BlowupLadder(
        t=t,
        errors=measured[:, 0],
        differential_errors=measured[:, 1],
        slope=loglog_slope(t, measured[:, 0]),
        differential_slope=loglog_slope(t, measured[:, 1]),
    )


def blowup_error(
    points: Sequence[SolutionPoint],
    x0: NoidParams,
    samples: np.ndarray,
    z0: complex = 0j,
    settings: Optional[Settings] = None,
) -> BlowupLadder:
    """sup over the samples of |f_t / t - psi| and |df_t / t - dpsi| for every solved t.

    psi integrates the Weierstrass representation of x0 from z0 along straight
    segments, starting from f_t(z0) / t.
    """
    settings = settings or get_settings()
    points = [p for p in points if p.t != 0]
    if not points:
        raise PreconditionError("blow-up comparison needs solved points with t != 0")
    for point in points:
        if point.residual > settings.solver_tol:
            raise PreconditionError(
                f"x(t) at t={point.t:g} is not solved (residual {point.residual:.3e})"
            )
    sources = [(p.t, NoidFrameSource(p.t, p.x, z0, settings)) for p in points]
    return _blowup_ladder(sources, x0.at_zero(), samples, z0, settings)


def delaunay_blowup_error(
    t_values: Sequence[float],
    samples: np.ndarray,
    truncation: int,
    rho: float = 2.0,
    settings: Optional[Settings] = None,
) -> BlowupLadder:
    """Blow-up ladder of the Delaunay family against the catenoid, frames based at z = 1."""
    settings = settings or get_settings()
    t_values = [t for t in t_values if t != 0]
    if not t_values:
        raise PreconditionError("blow-up comparison needs t != 0")
    sources = [(t, DelaunayFrameSource(t, truncation, rho)) for t in t_values]
    return _blowup_ladder(sources, catenoid_data(), samples, 1.0 + 0j, settings)


# ---------------------------------------------------------------------------
# Delaunay ends


@dataclass(frozen=True)
class EndAlpha:
    """Residue alpha of (g - g(p_i)) omega at p_i on the spectral grid."""

    samples: np.ndarray
    value: complex
    variation: float

    @property
    def imaginary(self) -> float:
        return abs(self.value.imag)


def end_alpha(t: float, x: NoidParams, i: int, settings: Optional[Settings] = None) -> EndAlpha:
    """alpha_i per lambda sample by contour quadrature; value is the lambda^0 coefficient."""
    settings = settings or get_settings()
    if not 0 <= i < x.n:
        raise InvalidInputError(f"end index {i} out of range for n = {x.n}")
    grid = CircleGrid(x.truncation)
    data = x.sampled(grid)
    nodal = WeierstrassData(data.a[:, None, :], data.b[:, None, :], data.ends[:, None, :], data.scale)
    central = x.at_zero().ends
    g_end = data.g(data.ends[:, i])[:, None]
    integral = contour_integral(
        lambda z: nodal.g_power_omega(z, 1) - g_end * nodal.g_power_omega(z, 0),
        central[i],
        4 * domain_epsilon(central),
        settings.quad_tol,
        settings.quad_min_nodes,
        settings.quad_max_nodes,
    )
    samples = integral / (2j * np.pi)
    coeffs, _ = grid.to_coeffs(samples, x.rho)
    n = x.truncation
    value = complex(coeffs[n])
    remainder = coeffs.copy()
    remainder[n] = 0
    variation = float(np.sum(np.abs(remainder) * x.rho ** np.abs(np.arange(-n, n + 1))))
    logger.debug("alpha_%d at t=%g: %s (lambda variation %.2e)", i + 1, t, value, variation)
    return EndAlpha(samples, value, variation)


def eigenvalue_square(t: float, alpha: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Lambda^2 = 1/4 + t (lambda - 1)^2 alpha / (4 lambda)."""
    return 0.25 + t * (lam - 1) ** 2 * alpha / (4 * lam)


def end_normal(data: WeierstrassData, end: complex) -> np.ndarray:
    """N_0 at an end; the north pole where g has a pole."""
    B = complex(data.B(end))
    if abs(B) <= 1e-12:
        return np.array([0.0, 0.0, 1.0])
    return gauss_normal(complex(data.A(end)) / B)


def fit_axis(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Total-least-squares line through 3D points: (centroid, unit direction)."""
    points = np.asarray(points, dtype=float)
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid)
    return centroid, vt[0]


def axis_angle(direction: np.ndarray, reference: np.ndarray) -> float:
    """Angle in degrees between two lines (orientation ignored)."""
    cosine = abs(float(np.dot(direction, reference))) / (np.linalg.norm(direction) * np.linalg.norm(reference))
    return float(np.degrees(np.arccos(min(1.0, cosine))))


@dataclass(frozen=True)
class EndGeometry:
    """Mesh evidence on one end annulus."""

    centroid: np.ndarray
    axis: np.ndarray
    symmetry_residual: float
    self_intersections: int


def end_geometry(domain: ParameterMesh, surface: SurfaceMesh, i: int) -> EndGeometry:
    """Axis fitted to ring centroids, rotational-symmetry residual and self-intersections of end i."""
    ok = surface.ok
    rings = [ring[ok[ring]] for (end, _), ring in sorted(domain.rings.items()) if end == i]
    rings = [ring for ring in rings if ring.size >= 3]
    if len(rings) < 2:
        raise PreconditionError(f"end {i + 1} has fewer than two immersed rings")
    centroids = np.array([surface.vertices[ring].mean(axis=0) for ring in rings])
    centroid, axis = fit_axis(centroids)
    worst = 0.0
    for ring in rings:
        offsets = surface.vertices[ring] - centroid
        radial = np.linalg.norm(offsets - np.outer(offsets @ axis, axis), axis=1)
        worst = max(worst, float((radial.max() - radial.min()) / radial.mean()))
    in_end = np.all(surface.region[surface.faces] == i, axis=1)
    hits = self_intersections(surface.vertices, surface.faces[in_end])
    return EndGeometry(centroid, axis, worst, hits)


@dataclass(frozen=True)
class EndReport:
    index: int
    t: float
    alpha: complex
    alpha_variation: float
    weight: float
    tau: float
    sign: float
    kind: str
    axis_limit: np.ndarray
    eigenvalue_defect: float
    convention: str = "flux"
    geometry: Optional[EndGeometry] = None

    @property
    def necksize_ratio(self) -> float:
        """w / (2 pi t); tends to sign * tau."""
        return self.alpha.real

    @property
    def necksize_error(self) -> float:
        return abs(self.alpha.real - self.sign * self.tau) / self.tau

    @property
    def axis_angle(self) -> Optional[float]:
        return None if self.geometry is None else axis_angle(self.geometry.axis, self.axis_limit)


def end_report(
    t: float,
    x: NoidParams,
    i: int,
    x0: Optional[NoidParams] = None,
    geometry: Optional[EndGeometry] = None,
    settings: Optional[Settings] = None,
) -> EndReport:
    """Weight, limiting necksize and axis, end type and the Lambda^2 reality defect of end i.

    The sign of alpha_{i,0} = +-tau_i is read from the computed flux: + when
    the flux points along N_0(p_i).
    """
    settings = settings or get_settings()
    x0 = x0 or x
    alpha = end_alpha(t, x, i, settings)
    table = periods(x0, settings)
    central = x0.at_zero()
    normal = end_normal(central, central.ends[i])
    flux = table.flux[i]
    sign = 1.0 if float(flux @ normal) >= 0 else -1.0
    weight = 2 * np.pi * t * alpha.value.real
    kind = "unduloid" if weight > 0 else "nodoid" if weight < 0 else "catenoid"
    grid = CircleGrid(x.truncation)
    defect = float(np.max(np.abs(eigenvalue_square(t, alpha.samples, grid.points).imag)))
    logger.info("end %d at t=%g: weight %.6g (%s), alpha %.6g, tau %.6g", i + 1, t, weight, kind,
                alpha.value.real, table.necksizes[i])
    return EndReport(
        index=i,
        t=t,
        alpha=alpha.value,
        alpha_variation=alpha.variation,
        weight=weight,
        tau=float(table.necksizes[i]),
        sign=sign,
        kind=kind,
        axis_limit=normal,
        eigenvalue_defect=defect,
        geometry=geometry,
    )


def delaunay_axis(phi_at_one: np.ndarray) -> np.ndarray:
    """Limit axis Q e3 Q^-1 with Q the unitary factor of Phi_0(1) H."""
    phi_at_one = np.asarray(phi_at_one, dtype=complex)
    if abs(np.linalg.det(phi_at_one)) <= 1e-14:
        raise InvalidInputError("Phi_0(1) is singular")
    Q, _ = phase_fixed_qr(phi_at_one @ H)
    return Su2Vector.from_matrix(Q @ E3 @ np.linalg.inv(Q)).x


def end_frame_at_one(g_end: complex) -> np.ndarray:
    """Gauged t = 0 frame at w = 1 near an end where g = g_end."""
    return np.array([[g_end + 1, 1 - g_end], [-1, 1]], dtype=complex) / np.sqrt(2.0)


@dataclass(frozen=True)
class GaugeChain:
    """Perturbed Delaunay potential near an end and the checks of its construction."""

    potential: Potential
    r: float
    s: float
    p: complex
    q: float
    residue: np.ndarray
    residue_error: float
    limit_error: float
    gauge_at_zero_error: float
    unitary_error: float


def _mobius_gauge(p: complex, q: float) -> Callable:
    def gauge(v):
        v = complex(v)
        scale = 1 / np.sqrt(q * (p * v + q))
        return scale * np.array([[p * v + q, p * v], [0, q]], dtype=complex)

    return gauge


def _residue_at_zero(potential: Potential, radius: float, nodes: int = 64) -> np.ndarray:
    total = 0.0
    for k in range(nodes):
        v = radius * np.exp(2j * np.pi * k / nodes)
        total = total + potential.sample(v) * v
    return total / nodes


def _chain(t: float, x: NoidParams, i: int, alpha: float, grid: CircleGrid,
           settings: Settings) -> tuple[Potential, float, float, complex, float, float]:
    xi = NoidPotential(t, x, grid, settings)
    chart = EndChart(xi, i)
    pulled = ChartPotential(xi, chart, singular=[0j])
    pair = rs_solve(0.25 * t * alpha)
    k = np.sqrt(pair.r * grid.points + pair.s)
    gauged = GaugedPotential(pulled, EndGauge(k, grid, x.rho))
    g_end = complex(x.at_zero().g(x.at_zero().ends[i]))
    _, R = phase_fixed_qr(end_frame_at_one(g_end) @ H)
    rho, mu = float(R[0, 0].real), complex(R[0, 1])
    q, p = 1 / rho ** 2, -mu / rho
    moved = ChartPotential(gauged, mobius_chart(p, q), singular=[-q / p] if p != 0 else [])
    matrix = _mobius_gauge(p, q)
    gauge = FunctionGauge(lambda v: np.broadcast_to(matrix(v), (grid.size, 2, 2)).copy(), grid, x.rho,
                          singular=[-q / p] if p != 0 else [])
    w_radius = 0.5 * chart.radius * float(np.min(np.abs(chart.dg_end)))
    v_radius = 0.5 * q * w_radius
    if p != 0:
        v_radius = min(v_radius, 0.25 * abs(q / p))
    return GaugedPotential(moved, gauge), pair.r, pair.s, p, q, v_radius


def end_gauge_chain(t: float, x: NoidParams, i: int, settings: Optional[Settings] = None) -> GaugeChain:
    """Gauge the n-noid potential near end i into a perturbed Delaunay potential.

    w = g - g(p_i), then G(w) with k = sqrt(r lambda + s), rs = t alpha / 4,
    then v with w = v / (p v + q) and the upper-triangular gauge normalizing
    the t = 0 frame at 1.
    """
    settings = settings or get_settings()
    grid = CircleGrid(x.truncation)
    alpha = end_alpha(t, x, i, settings).value.real
    potential, r, s, p, q, radius = _chain(t, x, i, alpha, grid, settings)
    residue = _residue_at_zero(potential, radius)
    expected = DelaunayPotential(r, s, grid, x.rho).residue
    residue_error = float(np.max(np.abs(residue - expected)))

    limit, *_ = _chain(0.0, x, i, 0.0, grid, settings)
    limit_error = 0.0
    for k in range(8):
        v = 0.5 * radius * np.exp(2j * np.pi * k / 8)
        limit_error = max(limit_error, float(np.max(np.abs(limit.sample(v) * v - A0))))

    gauge_at_zero = _mobius_gauge(p, q)(0.0)
    g_end = complex(x.at_zero().g(x.at_zero().ends[i]))
    middle = np.array([[np.sqrt(q), p / np.sqrt(q)], [0, 1 / np.sqrt(q)]])
    normalized = end_frame_at_one(g_end) @ H @ middle @ inv_unimodular(H)
    unitary_error = float(np.max(np.abs(np.conj(normalized.T) @ normalized - np.eye(2))))
    logger.info("gauge chain at end %d: residue error %.2e, t=0 error %.2e", i + 1, residue_error, limit_error)
    return GaugeChain(
        potential=potential,
        r=r,
        s=s,
        p=p,
        q=q,
        residue=residue,
        residue_error=residue_error,
        limit_error=limit_error,
        gauge_at_zero_error=float(np.max(np.abs(gauge_at_zero - np.eye(2)))),
        unitary_error=unitary_error,
    )


# ---------------------------------------------------------------------------
# Delaunay family


def delaunay_monodromy(t: float, truncation: int, rho: float = 2.0,
                       settings: Optional[Settings] = None) -> dict[str, float]:
    """Transported monodromy around 0 against exp(2 pi i A_t), M(1) = -I and dM/dlambda(1) = 0."""
    settings = settings or get_settings()
    grid = CircleGrid(truncation)
    xi = DelaunayPotential.for_t(t, grid, rho)
    start = np.broadcast_to(np.eye(2, dtype=complex), (grid.size, 2, 2)).copy()
    end = integrate_samples(xi, circle_path(0j, 1.0), start, settings).samples
    closed_form = expm_traceless(2j * np.pi * xi.residue)
    M = LoopMatrix.from_samples(end, grid, rho, det_tag=True)
    return {
        "closed_form": float(np.max(np.abs(end - closed_form))),
        "value_at_one": float(np.max(np.abs(M.at_one() + np.eye(2)))),
        "derivative_at_one": float(np.max(np.abs(M.derivative_at_one()))),
    }
