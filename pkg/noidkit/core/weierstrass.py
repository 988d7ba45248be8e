"""Weierstrass data of minimal n-noids: Gauss map, periods, flux, rank test.

The data are g = A/B and omega = c B^2 dz / prod (z - p_i)^2 with
A = sum a_i z^(n-i), B = sum b_i z^(n-i).  Evaluations broadcast over leading
axes of the parameter arrays, so one call can serve every sample of the
spectral circle or every finite-difference perturbation at once.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.polynomial import legendre
from scipy.optimize import brentq

from noidkit.config import Settings, get_settings
from noidkit.core.loop_algebra import CircleGrid, LaurentLoop
from noidkit.errors import (
    AccuracyError,
    ConstructionError,
    ContourError,
    DegenerateInputError,
    InvalidInputError,
    PoleError,
)

logger = logging.getLogger(__name__)

MOBIUS_FROZEN = (0, 1, 2)


def horner(coeffs: np.ndarray, z: np.ndarray) -> np.ndarray:
    """sum coeffs[..., i] z^(deg - i), highest degree first."""
    coeffs = np.asarray(coeffs, dtype=complex)
    acc = np.zeros(np.broadcast_shapes(coeffs.shape[:-1], np.shape(z)), dtype=complex)
    for i in range(coeffs.shape[-1]):
        acc = acc * z + coeffs[..., i]
    return acc


def horner_derivative(coeffs: np.ndarray, z: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=complex)
    degree = coeffs.shape[-1] - 1
    if degree == 0:
        return np.zeros(np.broadcast_shapes(coeffs.shape[:-1], np.shape(z)), dtype=complex)
    scaled = coeffs[..., :-1] * np.arange(degree, 0, -1)
    return horner(scaled, z)


@dataclass(frozen=True)
class WeierstrassData:
    """Numeric Weierstrass data, possibly batched along leading axes.

    a, b: polynomial coefficients of A and B, highest degree first.
    ends: finite ends p_i (the double poles of omega).
    scale: constant factor c in omega = c B^2 dz / prod (z - p_i)^2.
    """

    a: np.ndarray
    b: np.ndarray
    ends: np.ndarray
    scale: complex = 1.0

    def __post_init__(self):
        for name in ("a", "b", "ends"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=complex))

    @property
    def n(self) -> int:
        return self.ends.shape[-1]

    def A(self, z):
        return horner(self.a, z)

    def B(self, z):
        return horner(self.b, z)

    def end_product(self, z):
        z = np.asarray(z, dtype=complex)
        return np.prod(z[..., None] - self.ends, axis=-1)

    def g(self, z):
        return self.A(z) / self.B(z)

    def dg(self, z):
        """dz-coefficient of dg, (A'B - AB') / B^2."""
        A, B = self.A(z), self.B(z)
        return (horner_derivative(self.a, z) * B - A * horner_derivative(self.b, z)) / B ** 2

    def omega(self, z):
        return self.scale * self.B(z) ** 2 / self.end_product(z) ** 2

    def g_power_omega(self, z, k: int):
        """g^k omega = c A^k B^(2-k) / prod^2, regular at the roots of B."""
        return self.scale * self.A(z) ** k * self.B(z) ** (2 - k) / self.end_product(z) ** 2

    def b_roots(self) -> np.ndarray:
        """Roots of B via companion-matrix eigenvalues (unbatched data only)."""
        coeffs = np.trim_zeros(self.b, "f")
        if coeffs.size <= 1:
            return np.zeros(0, dtype=complex)
        return np.roots(coeffs)

    def a_roots(self) -> np.ndarray:
        coeffs = np.trim_zeros(self.a, "f")
        if coeffs.size <= 1:
            return np.zeros(0, dtype=complex)
        return np.roots(coeffs)


def _as_loops(values: Sequence[Union[LaurentLoop, complex]], truncation: int, rho: float) -> tuple[LaurentLoop, ...]:
    loops = []
    for value in values:
        if isinstance(value, LaurentLoop):
            loops.append(value.padded(truncation))
        else:
            loops.append(LaurentLoop.constant(value, truncation, rho))
    return tuple(loops)


@dataclass(frozen=True)
class NoidParams:
    """Parameter vector x = (a_i, b_i, p_i) with entries in W^{>=0}."""

    n: int
    a: tuple[LaurentLoop, ...]
    b: tuple[LaurentLoop, ...]
    p: tuple[LaurentLoop, ...]
    frozen: tuple[int, ...] = MOBIUS_FROZEN

    def __post_init__(self):
        if self.n < 3:
            raise InvalidInputError(f"an n-noid needs n >= 3 ends, got {self.n}")
        if not (len(self.a) == len(self.b) == len(self.p) == self.n):
            raise InvalidInputError("a, b and p must each have n entries")
        loops = self.a + self.b + self.p
        rho = loops[0].rho
        if any(loop.rho != rho for loop in loops):
            raise InvalidInputError("parameter loops use different weights")
        for loop in loops:
            if not loop.is_nonnegative():
                raise InvalidInputError("parameters must lie in W^{>=0}")
        truncation = max(loop.truncation for loop in loops)
        object.__setattr__(self, "a", tuple(loop.padded(truncation) for loop in self.a))
        object.__setattr__(self, "b", tuple(loop.padded(truncation) for loop in self.b))
        object.__setattr__(self, "p", tuple(loop.padded(truncation) for loop in self.p))
        object.__setattr__(self, "frozen", tuple(sorted(self.frozen)))

    @classmethod
    def constant(
        cls,
        a: Sequence[complex],
        b: Sequence[complex],
        p: Sequence[complex],
        truncation: int,
        rho: float = 2.0,
        frozen: tuple[int, ...] = MOBIUS_FROZEN,
    ) -> "NoidParams":
        return cls(
            n=len(p),
            a=_as_loops(a, truncation, rho),
            b=_as_loops(b, truncation, rho),
            p=_as_loops(p, truncation, rho),
            frozen=frozen,
        )

    @property
    def truncation(self) -> int:
        return self.a[0].truncation

    @property
    def rho(self) -> float:
        return self.a[0].rho

    def coefficient_array(self) -> np.ndarray:
        """All coefficients of powers 0..N, shape (3, n, N+1)."""
        n = self.truncation
        return np.array([[loop.coeffs[n:] for loop in group] for group in (self.a, self.b, self.p)])

    @classmethod
    def from_coefficient_array(
        cls, coeffs: np.ndarray, rho: float = 2.0, frozen: tuple[int, ...] = MOBIUS_FROZEN
    ) -> "NoidParams":
        coeffs = np.asarray(coeffs, dtype=complex)
        truncation = coeffs.shape[-1] - 1
        pad = np.zeros(coeffs.shape[:-1] + (truncation,), dtype=complex)
        full = np.concatenate([pad, coeffs], axis=-1)
        groups = [tuple(LaurentLoop(row, rho) for row in full[k]) for k in range(3)]
        return cls(n=coeffs.shape[1], a=groups[0], b=groups[1], p=groups[2], frozen=frozen)

    def free_slots(self) -> list[tuple[int, int]]:
        """(group, index) of the 3n - 3 free parameters: all a_i, all b_i, unfrozen p_i."""
        slots = [(0, i) for i in range(self.n)] + [(1, i) for i in range(self.n)]
        slots += [(2, i) for i in range(self.n) if i not in self.frozen]
        return slots

    def free_coefficients(self) -> np.ndarray:
        """Free parameters as an array of shape (3n-3, N+1)."""
        coeffs = self.coefficient_array()
        return np.array([coeffs[g, i] for g, i in self.free_slots()])

    def with_free_coefficients(self, free: np.ndarray) -> "NoidParams":
        coeffs = self.coefficient_array().copy()
        for row, (g, i) in zip(np.asarray(free), self.free_slots()):
            coeffs[g, i] = row
        return NoidParams.from_coefficient_array(coeffs, self.rho, self.frozen)

    def at_zero(self) -> WeierstrassData:
        """Data at lambda = 0 (the central value for constant parameters)."""
        coeffs = self.coefficient_array()[:, :, 0]
        return WeierstrassData(coeffs[0], coeffs[1], coeffs[2])

    central = at_zero

    def at(self, lam: complex) -> WeierstrassData:
        values = np.array([[loop(lam) for loop in group] for group in (self.a, self.b, self.p)])
        return WeierstrassData(values[0], values[1], values[2])

    def sampled(self, grid: CircleGrid) -> WeierstrassData:
        """Data at every grid sample, batched as (K, n)."""
        coeffs = np.array([[loop.coeffs for loop in group] for group in (self.a, self.b, self.p)])
        values = grid.to_samples(coeffs)
        return WeierstrassData(values[0].T, values[1].T, values[2].T)

    def is_constant(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coefficient_array()[:, :, 1:]) <= tol))

    def lambda_dependence(self) -> float:
        """Largest coefficient of a positive lambda power."""
        return float(np.max(np.abs(self.coefficient_array()[:, :, 1:]), initial=0.0))

    def validate(self, tol: float = 1e-8) -> None:
        """Check the central-value invariants; raise DegenerateInputError."""
        data = self.at_zero()
        ends = data.ends
        gaps = np.abs(ends[:, None] - ends[None, :]) + np.eye(self.n) * np.inf
        if np.min(gaps) <= tol:
            i, j = np.unravel_index(np.argmin(gaps), gaps.shape)
            raise DegenerateInputError(f"end positions p_{i + 1} and p_{j + 1} coincide")
        if abs(data.a[0]) <= tol and abs(data.b[0]) <= tol:
            raise DegenerateInputError("g = A/B must have degree n - 1 (a_1 or b_1 nonzero)")
        for root in data.b_roots():
            if abs(data.A(root)) <= tol * max(1.0, np.max(np.abs(data.a))):
                raise DegenerateInputError(f"A and B share the root {root:.6g}")
        if np.max(np.abs(data.b)) <= tol:
            raise DegenerateInputError("B vanishes identically")


def domain_epsilon(ends: np.ndarray) -> float:
    """Working radius: 1/16 of the minimal distance between ends."""
    ends = np.asarray(ends, dtype=complex)
    if ends.size < 2:
        return 1.0 / 16.0
    gaps = np.abs(ends[:, None] - ends[None, :]) + np.eye(ends.size) * np.inf
    return float(np.min(gaps)) / 16.0


def eval_g(x: Union[NoidParams, WeierstrassData], z: complex, lam: Optional[complex] = None,
           tol: float = 1e-8) -> complex:
    """g at z, refusing roots of B."""
    data = _data_of(x, lam)
    B = complex(data.B(z))
    if abs(B) <= tol:
        raise PoleError(f"g has a pole at z = {z}", location=z, kind="b_root")
    return complex(data.A(z) / B)


def eval_omega(x: Union[NoidParams, WeierstrassData], z: complex, lam: Optional[complex] = None,
               tol: float = 1e-8) -> complex:
    """dz-coefficient of omega at z, refusing the ends."""
    data = _data_of(x, lam)
    distance = np.min(np.abs(z - data.ends)) if data.ends.size else np.inf
    if distance <= tol:
        raise PoleError(f"omega has a pole at the end z = {z}", location=z, kind="end")
    return complex(data.omega(z))


def _data_of(x: Union[NoidParams, WeierstrassData], lam: Optional[complex]) -> WeierstrassData:
    if isinstance(x, WeierstrassData):
        return x
    return x.at_zero() if lam is None else x.at(lam)


def gauss_normal(g: complex) -> np.ndarray:
    """Unit normal of the minimal surface from the stereographic Gauss map."""
    g = complex(g)
    if not np.isfinite(abs(g)):
        return np.array([0.0, 0.0, 1.0])
    denom = abs(g) ** 2 + 1
    return np.array([2 * g.real, 2 * g.imag, abs(g) ** 2 - 1]) / denom


def contour_integral(
    integrand: Callable[[np.ndarray], np.ndarray],
    center: complex,
    radius: float,
    tol: float = 1e-11,
    min_nodes: int = 64,
    max_nodes: int = 4096,
) -> np.ndarray:
    """Trapezoid rule on the circle |z - center| = radius with node doubling.

    integrand maps nodes of shape (M,) to values of shape (..., M); the
    result has shape (...).  Doubling reuses the previous nodes and stops
    once successive estimates differ by less than tol (absolute, scaled by
    max(1, |estimate|)).
    """
    nodes = min_nodes
    theta = 2 * np.pi * np.arange(nodes) / nodes
    points = center + radius * np.exp(1j * theta)
    running = np.sum(np.asarray(integrand(points)) * (points - center), axis=-1)
    estimate = 1j * running * (2 * np.pi / nodes)
    change = np.inf
    while nodes * 2 <= max_nodes:
        theta = 2 * np.pi * (np.arange(nodes) + 0.5) / nodes
        points = center + radius * np.exp(1j * theta)
        running = running + np.sum(np.asarray(integrand(points)) * (points - center), axis=-1)
        nodes *= 2
        refined = 1j * running * (2 * np.pi / nodes)
        if not np.all(np.isfinite(refined)):
            raise ContourError(f"integrand is singular on the contour around {center}", center=center, radius=radius)
        change = np.abs(refined - estimate)
        if np.all(change <= tol * np.maximum(1.0, np.abs(refined))):
            logger.debug("contour around %s converged with %d nodes", center, nodes)
            return refined
        estimate = refined
    raise AccuracyError(
        f"contour quadrature around {center} did not converge with {nodes} nodes",
        estimate=float(np.max(change)),
    )


@dataclass(frozen=True)
class PeriodTable:
    """Periods P_{i,k} = oint_{gamma_i} g^k omega for every end (batched leading axes allowed)."""

    P_all: np.ndarray
    radius: float

    @property
    def P(self) -> np.ndarray:
        """Rows of the first n - 1 ends."""
        return self.P_all[..., :-1, :]

    @property
    def Q_all(self) -> np.ndarray:
        P0, P1, P2 = self.P_all[..., 0], self.P_all[..., 1], self.P_all[..., 2]
        return np.stack([0.5 * (P0 - P2), 0.5j * (P0 + P2), P1], axis=-1)

    @property
    def Q(self) -> np.ndarray:
        return self.Q_all[..., :-1, :]

    @property
    def flux(self) -> np.ndarray:
        return -self.Q_all.imag

    @property
    def necksizes(self) -> np.ndarray:
        return np.linalg.norm(self.flux, axis=-1) / (2 * np.pi)

    def period_sum(self) -> float:
        """Largest component of sum_i P_i (zero by the residue theorem)."""
        return float(np.max(np.abs(np.sum(self.P_all, axis=-2))))

    def real_part_defect(self) -> float:
        """Largest |Re Q_i|; zero when the period problem is solved."""
        return float(np.max(np.abs(self.Q_all.real)))


def periods(
    x: Union[NoidParams, WeierstrassData],
    settings: Optional[Settings] = None,
    radius: Optional[float] = None,
    centers: Optional[np.ndarray] = None,
) -> PeriodTable:
    """Contour periods around every end.

    Contours are centred at the central end positions (or ``centers``) with
    radius 4 epsilon unless given.
    """
    settings = settings or get_settings()
    data = x.at_zero() if isinstance(x, NoidParams) else x
    if centers is None:
        if data.ends.ndim != 1:
            raise InvalidInputError("batched data need explicit contour centers")
        centers = data.ends
    return batched_periods(data, np.asarray(centers, dtype=complex), settings, radius)


def _batched(data: WeierstrassData) -> WeierstrassData:
    """Give batched data a trailing node axis for broadcasting against contour nodes."""
    return WeierstrassData(data.a[..., None, :], data.b[..., None, :], data.ends[..., None, :], data.scale)


def _check_contours(data: WeierstrassData, centers: np.ndarray, radius: float) -> None:
    ends = np.asarray(data.ends).reshape(-1, data.n)
    for center in centers:
        distance = np.abs(np.abs(ends - center) - radius)
        if np.min(distance) < 0.05 * radius:
            raise ContourError(f"an end lies on the contour around {center}", center=center, radius=radius)


def period_samples(x: NoidParams, grid: CircleGrid, settings: Optional[Settings] = None) -> PeriodTable:
    """P_{i,k}(x(lambda)) at every grid sample; P_all has shape (K, n, 3)."""
    settings = settings or get_settings()
    centers = x.at_zero().ends
    return batched_periods(x.sampled(grid), centers, settings)


def batched_periods(data: WeierstrassData, centers: np.ndarray, settings: Settings,
                    radius: Optional[float] = None) -> PeriodTable:
    """Periods of data batched along leading axes; contours shared by the batch."""
    radius = radius if radius is not None else 4 * domain_epsilon(centers)
    _check_contours(data, centers, radius)
    nodal = _batched(data)
    rows = []
    for center in centers:
        row = [
            contour_integral(
                lambda z, k=k: nodal.g_power_omega(z, k),
                center,
                radius,
                settings.quad_tol,
                settings.quad_min_nodes,
                settings.quad_max_nodes,
            )
            for k in range(3)
        ]
        rows.append(np.stack(row, axis=-1))
    return PeriodTable(P_all=np.stack(rows, axis=-2), radius=radius)


def period_jacobian(x0: NoidParams, settings: Optional[Settings] = None) -> np.ndarray:
    """Complex Jacobian of (P_1..P_{n-1}) w.r.t. the free parameters at lambda = 0 values.

    Central differences with step fd_step * (1 + |param|); the rows are the
    3(n-1) period components, the columns the 3n - 3 free parameters.
    """
    settings = settings or get_settings()
    data = x0.at_zero()
    base = np.array([data.a, data.b, data.ends])
    slots = x0.free_slots()
    steps = np.array([settings.fd_step * (1 + abs(base[g, i])) for g, i in slots])
    batch = np.repeat(base[None], 2 * len(slots), axis=0)
    for col, ((g, i), h) in enumerate(zip(slots, steps)):
        batch[2 * col, g, i] += h
        batch[2 * col + 1, g, i] -= h
    table = batched_periods(WeierstrassData(batch[:, 0], batch[:, 1], batch[:, 2], data.scale), data.ends, settings)
    values = table.P.reshape(len(slots), 2, -1)
    return ((values[:, 0] - values[:, 1]) / (2 * steps[:, None])).T


def nondegeneracy_rank(x0: NoidParams, settings: Optional[Settings] = None) -> tuple[int, np.ndarray]:
    """Rank of the period map differential and its singular values."""
    settings = settings or get_settings()
    jacobian = period_jacobian(x0, settings)
    singular_values = np.linalg.svd(jacobian, compute_uv=False)
    rank = int(np.sum(singular_values > settings.rank_tol * singular_values[0]))
    logger.info("period map rank %d of %d", rank, jacobian.shape[1])
    return rank, singular_values


def jorge_meeks(n: int, scale: float = 1.0, truncation: Optional[int] = None, rho: Optional[float] = None,
                settings: Optional[Settings] = None) -> NoidParams:
    """Symmetric n-noid data g ~ z^(n-1), omega = c dz / (z^n - 1)^2, ends at the n-th roots of unity.

    The g-scale is calibrated by root bracketing so that |P_{1,2}| = |P_{1,0}|; the
    result must then pass the period test Re(Q_i) = 0.
    """
    settings = settings or get_settings()
    if n < 3:
        raise InvalidInputError(f"n must be at least 3, got {n}")
    truncation = truncation or settings.truncation
    rho = rho or settings.rho
    ends = np.exp(2j * np.pi * np.arange(n) / n)
    root_c = np.sqrt(complex(scale))

    def table_for(s: float) -> PeriodTable:
        a = np.zeros(n, dtype=complex)
        a[0] = s * root_c
        b = np.zeros(n, dtype=complex)
        b[-1] = root_c
        return periods(WeierstrassData(a, b, ends), settings)

    def imbalance(s: float) -> float:
        P = table_for(s).P_all[0]
        return abs(P[2]) - abs(P[0])

    low, high = 0.25, 4.0
    if imbalance(low) > 0 or imbalance(high) < 0:
        raise ConstructionError("g-scale calibration bracket does not straddle the balanced value")
    s = brentq(imbalance, low, high, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    table = table_for(s)
    defect = table.real_part_defect()
    if defect > 1e-10 * max(1.0, float(np.max(np.abs(table.Q_all)))):
        raise ConstructionError(f"Jorge-Meeks data fail the period test (Re Q = {defect:.3e})")
    a = [s * root_c] + [0.0] * (n - 1)
    b = [0.0] * (n - 1) + [root_c]
    logger.info("jorge_meeks(%d): g-scale %.15g, necksize %.6g", n, s, table.necksizes[0])
    return NoidParams.constant(a, b, list(ends), truncation, rho)


def minimal_immersion(
    data: WeierstrassData,
    waypoints: Sequence[complex],
    start_value: Optional[np.ndarray] = None,
    nodes: int = 24,
    pieces: int = 8,
) -> np.ndarray:
    """psi(end) = psi(start) + Re int (1/2 (1 - g^2), i/2 (1 + g^2), g) omega along a polyline."""
    total = np.zeros(3, dtype=complex)
    x, w = legendre.leggauss(nodes)
    waypoints = [complex(z) for z in waypoints]
    for z_a, z_b in zip(waypoints[:-1], waypoints[1:]):
        for k in range(pieces):
            lo = z_a + (z_b - z_a) * k / pieces
            hi = z_a + (z_b - z_a) * (k + 1) / pieces
            z = 0.5 * (hi + lo) + 0.5 * (hi - lo) * x
            jac = 0.5 * (hi - lo)
            g = data.g(z)
            om = data.omega(z)
            integrand = np.stack([0.5 * (1 - g * g) * om, 0.5j * (1 + g * g) * om, g * om])
            total += integrand @ w * jac
    start = np.zeros(3) if start_value is None else np.asarray(start_value, dtype=float)
    return start + total.real


def flux_consistency(x: NoidParams, table: PeriodTable) -> np.ndarray:
    """|phi_i -/+ 2 pi tau_i N0(p_i)| per end, with the sign read from the flux."""
    data = x.at_zero()
    out = []
    for i, end in enumerate(data.ends):
        normal = gauss_normal(eval_g(data, end)) if abs(data.B(end)) > 1e-12 else np.array([0.0, 0.0, 1.0])
        phi = table.flux[i]
        tau = table.necksizes[i]
        sign = 1.0 if phi @ normal >= 0 else -1.0
        out.append(np.linalg.norm(phi - sign * 2 * np.pi * tau * normal))
    return np.array(out)
