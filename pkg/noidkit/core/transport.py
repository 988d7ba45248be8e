"""Holomorphic transport dPhi = Phi xi along paths, monodromies and the rescaled monodromy M~.

The state is the 2x2 frame at every sample of the circle grid, integrated by
scipy's DOP853 over one segment at a time.  For the n-noid family the frame
is written Phi = Y Phi_0 with Phi_0 the closed-form t = 0 frame; Y = C + mu V
with dV = (C + mu V) eta, which gives M - I = mu V C^-1 without cancellation.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import solve_ivp

from noidkit.config import Settings, get_settings
from noidkit.core.loop_algebra import (
    CircleGrid,
    LoopMatrix,
    det2,
    inv_unimodular,
    loop_log,
    scaled_logm,
)
from noidkit.core.paths import GeneratorLoop, PathSpec
from noidkit.core.potential import NoidPotential, Potential
from noidkit.core.weierstrass import NoidParams, period_samples
from noidkit.errors import InvalidInputError, MonodromyStructureError, TransportError

logger = logging.getLogger(__name__)

Field = Callable[[np.ndarray, complex, complex], np.ndarray]


@dataclass(frozen=True)
class TransportResult:
    samples: np.ndarray
    det_drift: float
    evaluations: int
    error_estimate: Optional[float] = None


def _integrate_field(field: Field, path: PathSpec, start: np.ndarray, rtol: float, atol: float) -> tuple[np.ndarray, int]:
    """Integrate dY/ds = field(Y, z(s), z'(s)) segment by segment."""
    shape = start.shape
    state = np.asarray(start, dtype=complex).ravel()
    evaluations = 0
    for segment in path.segments:

        def rhs(s, y, segment=segment):
            return field(y.reshape(shape), complex(segment.point(s)), complex(segment.velocity(s))).ravel()

        solution = solve_ivp(rhs, (0.0, 1.0), state, method="DOP853", rtol=rtol, atol=atol)
        evaluations += solution.nfev
        if solution.status != 0 or not np.all(np.isfinite(solution.y[:, -1])):
            where = complex(segment.point(solution.t[-1]))
            raise TransportError(f"integration failed near z = {where}: {solution.message}", location=where)
        state = solution.y[:, -1]
    return state.reshape(shape), evaluations


def potential_field(xi: Potential) -> Field:
    def field(frame, z, dz):
        return frame @ (xi.sample(z) * dz)

    return field


def integrate_samples(
    xi: Potential,
    path: PathSpec,
    start: np.ndarray,
    settings: Optional[Settings] = None,
    estimate_error: bool = False,
) -> TransportResult:
    """Transport of grid samples (K, 2, 2) along the path."""
    settings = settings or get_settings()
    path.validate(xi.poles(), settings.path_clearance)
    tol = settings.ode_tol
    end, evaluations = _integrate_field(potential_field(xi), path, start, tol, tol)
    scale = max(1.0, float(np.max(np.abs(start))) ** 2, float(np.max(np.abs(end))) ** 2)
    drift = float(np.max(np.abs(det2(end) - det2(start)))) / scale
    if drift > settings.transport_det_tol:
        raise TransportError(f"det(Phi) drifted by {drift:.3e} along the path", location=path.end)
    estimate = None
    if estimate_error:
        coarse, _ = _integrate_field(potential_field(xi), path, start, 16 * tol, 16 * tol)
        estimate = float(np.max(np.abs(coarse - end)))
    logger.debug("transport %s -> %s: %d evaluations, det drift %.2e", path.start, path.end, evaluations, drift)
    return TransportResult(end, drift, evaluations, estimate)


def integrate(
    xi: Potential,
    path: PathSpec,
    phi_start: LoopMatrix,
    settings: Optional[Settings] = None,
) -> LoopMatrix:
    """Solve dPhi = Phi xi along the path from Phi_start."""
    start = phi_start.samples(xi.grid)
    result = integrate_samples(xi, path, start, settings)
    return LoopMatrix.from_samples(result.samples, xi.grid, xi.rho, det_tag=phi_start.det_tag)


def monodromy_samples(
    xi: Potential,
    gamma: PathSpec,
    phi0: np.ndarray,
    approach: Optional[PathSpec] = None,
    settings: Optional[Settings] = None,
) -> np.ndarray:
    settings = settings or get_settings()
    if not gamma.loop:
        raise InvalidInputError("monodromy needs a closed path")
    start = phi0 if approach is None else integrate_samples(xi, approach, phi0, settings).samples
    end = integrate_samples(xi, gamma, start, settings).samples
    return end @ inv_unimodular(start)


def monodromy(
    xi: Potential,
    gamma: Union[PathSpec, GeneratorLoop],
    phi0: LoopMatrix,
    settings: Optional[Settings] = None,
) -> LoopMatrix:
    """M = Phi(end) Phi(start)^-1 around a closed path based at the start of ``approach``."""
    if isinstance(gamma, GeneratorLoop):
        values = monodromy_samples(xi, gamma.circle, phi0.samples(xi.grid), gamma.approach, settings)
    else:
        values = monodromy_samples(xi, gamma, phi0.samples(xi.grid), None, settings)
    return LoopMatrix.from_samples(values, xi.grid, xi.rho, det_tag=True)


def m_tilde(t: float, M: LoopMatrix, settings: Optional[Settings] = None) -> LoopMatrix:
    """4 lambda log(M) / (t (lambda - 1)^2) by synthetic division."""
    settings = settings or get_settings()
    if t == 0:
        raise InvalidInputError("m_tilde needs t != 0; use m_tilde_at_zero")
    n = M.truncation
    L = loop_log(M, CircleGrid(n), settings.log_radius)
    out = np.zeros((2, 2, 2 * n + 1), dtype=complex)
    worst = 0.0
    for i in range(2):
        for j in range(2):
            numerator = L.coeffs[i, j]
            quotient, remainder = P.polydiv(numerator, np.array([1.0, -2.0, 1.0]))
            worst = max(worst, float(np.max(np.abs(remainder))) / max(1.0, float(np.max(np.abs(numerator)))))
            quotient = np.pad(quotient, (0, max(0, 2 * n - 1 - quotient.size)))
            out[i, j, 1: 2 * n] = quotient[: 2 * n - 1]
    if worst > settings.structure_tol:
        raise MonodromyStructureError(
            f"log M is not divisible by (lambda - 1)^2 (relative remainder {worst:.3e})", remainder=worst
        )
    return LoopMatrix(4.0 / t * out, M.rho, tail_mass=4.0 / abs(t) * L.tail_mass)


def period_matrices(x: NoidParams, grid: CircleGrid, settings: Optional[Settings] = None) -> np.ndarray:
    """[[P1, P2], [-P0, -P1]] of every end at every grid sample, shape (n, K, 2, 2)."""
    table = period_samples(x, grid, settings)
    P0, P1, P2 = (np.moveaxis(table.P_all[..., k], 0, -1) for k in range(3))
    return np.stack([np.stack([P1, P2], axis=-1), np.stack([-P0, -P1], axis=-1)], axis=-2)


def m_tilde_at_zero(x: NoidParams, i: int, grid: Optional[CircleGrid] = None,
                    settings: Optional[Settings] = None) -> LoopMatrix:
    """Limit of M~_i at t = 0, assembled from the periods of x(lambda)."""
    grid = grid or CircleGrid(x.truncation)
    return LoopMatrix.from_samples(period_matrices(x, grid, settings)[i], grid, x.rho)


# ---------------------------------------------------------------------------
# rescaled transport of the n-noid family


def rescaled_field(potential: NoidPotential, base: np.ndarray) -> Field:
    mu = potential.mu[:, None, None]

    def field(V, z, dz):
        return (base + mu * V) @ (potential.eta(z) * dz)

    return field


def transport_y(
    potential: NoidPotential,
    path: PathSpec,
    y_start: np.ndarray,
    settings: Optional[Settings] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Y and V at the end of the path with Y = Y_start + mu V, dV = (Y_start + mu V) eta."""
    settings = settings or get_settings()
    path.validate(potential.x.at_zero().ends, settings.path_clearance)
    start = np.broadcast_to(np.asarray(y_start, dtype=complex), (potential.grid.size, 2, 2))
    V, evaluations = _integrate_field(
        rescaled_field(potential, start), path, np.zeros_like(start), settings.ode_tol, settings.ode_tol
    )
    logger.debug("rescaled transport %s -> %s: %d evaluations", path.start, path.end, evaluations)
    return start + potential.mu[:, None, None] * V, V


@dataclass(frozen=True)
class GeneratorMonodromy:
    """Monodromy of one generator on grid samples: M = I + mu D, M~ = log(M) / mu."""

    D: np.ndarray
    mu: np.ndarray
    y_approach: np.ndarray

    @property
    def M(self) -> np.ndarray:
        return np.eye(2) + self.mu[:, None, None] * self.D

    @property
    def m_tilde(self) -> np.ndarray:
        return scaled_logm(self.D, self.mu)


def rescaled_monodromy(
    potential: NoidPotential,
    generator: GeneratorLoop,
    settings: Optional[Settings] = None,
) -> GeneratorMonodromy:
    """Monodromy of Phi = Y Phi_0 around a generator, without dividing by t or (lambda - 1)^2."""
    settings = settings or get_settings()
    y_q, _ = transport_y(potential, generator.approach, np.eye(2), settings)
    _, V = transport_y(potential, generator.circle, y_q, settings)
    return GeneratorMonodromy(D=V @ inv_unimodular(y_q), mu=potential.mu, y_approach=y_q)
