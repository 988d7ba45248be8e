"""Newton/continuation solver for the n-noid Monodromy Problem.

Unknowns are the 3n - 3 free parameters, each truncated to the coefficients
of lambda^0..lambda^N, flattened to real coordinates.  The residual collects,
for the generators of the first n - 1 ends, the blocks F+, Re F0, G+, (G-)*
and G0 of F = M~11 + M~11* and G = M~12 + M~21*.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from noidkit.config import Settings, get_settings
from noidkit.core.loop_algebra import CircleGrid, LoopMatrix
from noidkit.core.paths import GeneratorLoop, Obstacle, generator_loop
from noidkit.core.potential import NoidPotential, choose_basepoint
from noidkit.core.transport import period_matrices, rescaled_monodromy
from noidkit.core.weierstrass import NoidParams, domain_epsilon, nondegeneracy_rank
from noidkit.errors import (
    ContinuationError,
    ConvergenceError,
    InvalidInputError,
    PreconditionError,
    SolverFailure,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResidualVector:
    """Projected blocks of F_i and G_i per end, shapes (n-1, N) or (n-1,)."""

    f_plus: np.ndarray
    f_zero: np.ndarray
    g_plus: np.ndarray
    g_minus_star: np.ndarray
    g_zero: np.ndarray
    tail_mass: float = 0.0

    @classmethod
    def from_coefficients(cls, coeffs: np.ndarray, tail_mass: float = 0.0) -> "ResidualVector":
        """From M~ coefficients shaped (n-1, 2, 2, 2N+1)."""
        n = (coeffs.shape[-1] - 1) // 2
        m11, m12, m21 = coeffs[:, 0, 0], coeffs[:, 0, 1], coeffs[:, 1, 0]
        F = m11 + np.conj(m11[:, ::-1])
        G = m12 + np.conj(m21[:, ::-1])
        return cls(
            f_plus=F[:, n + 1:],
            f_zero=F[:, n].real,
            g_plus=G[:, n + 1:],
            g_minus_star=np.conj(G[:, :n][:, ::-1]),
            g_zero=G[:, n],
            tail_mass=tail_mass,
        )

    def flat(self) -> np.ndarray:
        rows = [
            np.concatenate([
                self.f_plus[i].real, self.f_plus[i].imag, [self.f_zero[i]],
                self.g_plus[i].real, self.g_plus[i].imag,
                self.g_minus_star[i].real, self.g_minus_star[i].imag,
                [self.g_zero[i].real, self.g_zero[i].imag],
            ])
            for i in range(self.f_zero.shape[0])
        ]
        return np.concatenate(rows)

    def norm(self) -> float:
        return float(np.max(np.abs(self.flat())))

    def __len__(self) -> int:
        return self.flat().size


@dataclass(frozen=True)
class JacobianResult:
    matrix: np.ndarray
    singular_values: np.ndarray

    @property
    def condition(self) -> float:
        smallest = self.singular_values[-1]
        return float(self.singular_values[0] / smallest) if smallest > 0 else np.inf

    def rank(self, tol: float) -> int:
        return int(np.sum(self.singular_values > tol * self.singular_values[0]))

    def kernel_dimension(self, tol: float) -> int:
        return self.matrix.shape[1] - self.rank(tol)


@dataclass(frozen=True)
class SolutionPoint:
    t: float
    x: NoidParams
    residual: float
    iterations: int
    tail_mass: float = 0.0


@dataclass
class SolutionPath:
    points: list[SolutionPoint] = field(default_factory=list)

    def last(self, sign: float = 0.0) -> Optional[SolutionPoint]:
        """Last point reached on the branch of the given sign (any branch for 0)."""
        branch = [p for p in self.points if sign == 0 or np.sign(p.t) in (0, np.sign(sign))]
        return max(branch, key=lambda p: abs(p.t)) if branch else None

    def before(self, point: SolutionPoint) -> Optional[SolutionPoint]:
        """Point preceding ``point`` on its branch, None at the start of the branch."""
        sign = np.sign(point.t)
        branch = [p for p in self.points if np.sign(p.t) in (0, sign) and abs(p.t) < abs(point.t)]
        return max(branch, key=lambda p: abs(p.t)) if branch else None

    def at(self, t: float, tol: float = 1e-15) -> Optional[SolutionPoint]:
        for point in self.points:
            if abs(point.t - t) <= tol * max(1.0, abs(t)):
                return point
        return None

    @property
    def reached(self) -> tuple[float, float]:
        values = [p.t for p in self.points] or [0.0]
        return min(values), max(values)


def flatten_free(x: NoidParams) -> np.ndarray:
    free = x.free_coefficients()
    return np.concatenate([free.real.ravel(), free.imag.ravel()])


def unflatten_free(x: NoidParams, vector: np.ndarray) -> NoidParams:
    half = vector.size // 2
    shape = x.free_coefficients().shape
    free = (vector[:half] + 1j * vector[half:]).reshape(shape)
    return x.with_free_coefficients(free)


class MonodromyService:
    """Residual, Jacobian and continuation for the n-noid Monodromy Problem."""

    def __init__(self, x0: NoidParams, settings: Optional[Settings] = None, z0: Optional[complex] = None):
        """Fix the basepoint and generator loops once for the central data x0."""
        self.settings = settings or get_settings()
        self.x0 = x0
        self.grid = CircleGrid(x0.truncation)
        if z0 is None:
            z0, self.heuristic_basepoint = choose_basepoint(x0)
        else:
            self.heuristic_basepoint = False
        self.z0 = complex(z0)
        central = x0.at_zero()
        eps = domain_epsilon(central.ends)
        roots = central.b_roots()
        self.generators: list[GeneratorLoop] = []
        for i in range(x0.n - 1):
            obstacles = [Obstacle(p, 6 * eps) for j, p in enumerate(central.ends) if j != i]
            obstacles += [Obstacle(r, 2 * eps) for r in roots]
            self.generators.append(generator_loop(self.z0, central.ends[i], 4 * eps, obstacles))

    def _map(self, func: Callable, items: Iterable) -> list:
        items = list(items)
        if self.settings.workers <= 1 or len(items) <= 1:
            return [func(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.settings.workers) as pool:
            return list(pool.map(func, items))

    # -- M~ on grid samples

    def mtilde_samples(self, t: float, x: NoidParams) -> np.ndarray:
        """M~_i at every grid sample, shape (n-1, K, 2, 2)."""
        if t == 0:
            return period_matrices(x, self.grid, self.settings)[: x.n - 1]
        potential = NoidPotential(t, x, self.grid, self.settings)
        values = self._map(lambda gen: rescaled_monodromy(potential, gen, self.settings).m_tilde, self.generators)
        return np.stack(values)

    def monodromy_samples(self, t: float, x: NoidParams) -> np.ndarray:
        """M_i at every grid sample, shape (n-1, K, 2, 2)."""
        potential = NoidPotential(t, x, self.grid, self.settings)
        return np.stack(self._map(lambda gen: rescaled_monodromy(potential, gen, self.settings).M, self.generators))

    def assemble(self, samples: np.ndarray) -> ResidualVector:
        coeffs, tail = self.grid.to_coeffs(np.moveaxis(samples, 1, -1), self.x0.rho)
        return ResidualVector.from_coefficients(coeffs, float(np.sum(tail)))

    def residual(self, t: float, x: NoidParams) -> ResidualVector:
        return self.assemble(self.mtilde_samples(t, x))

    # -- derivatives

    def parameter_derivatives(self, t: float, x: NoidParams) -> np.ndarray:
        """dM~(lambda_k)/dx_j(lambda_k) per free parameter j, shape (3n-3, n-1, K, 2, 2)."""
        base = x.free_coefficients()
        central = base[:, 0]

        def derivative(j: int) -> np.ndarray:
            h = self.settings.fd_step * (1 + abs(central[j]))
            shifted = []
            for sign in (1.0, -1.0):
                free = base.copy()
                free[j, 0] += sign * h
                shifted.append(self.mtilde_samples(t, x.with_free_coefficients(free)))
            return (shifted[0] - shifted[1]) / (2 * h)

        return np.stack(self._map(derivative, range(base.shape[0])))

    def jacobian(self, t: float, x: NoidParams, method: str = "samples") -> JacobianResult:
        """Real Jacobian of the flattened residual w.r.t. the flattened free coefficients."""
        if method == "columns":
            matrix = self._jacobian_columns(t, x)
        elif method == "samples":
            matrix = self._jacobian_samples(t, x)
        else:
            raise InvalidInputError(f"unknown jacobian method {method!r}")
        singular_values = np.linalg.svd(matrix, compute_uv=False)
        result = JacobianResult(matrix, singular_values)
        logger.debug("jacobian %s at t=%g: shape %s, condition %.3e", method, t, matrix.shape, result.condition)
        return result

    def _jacobian_samples(self, t: float, x: NoidParams) -> np.ndarray:
        derivatives = self.parameter_derivatives(t, x)
        n_free, n_coeffs = x.free_coefficients().shape
        lam = self.grid.points
        real_cols, imag_cols = [], []
        for j in range(n_free):
            for m in range(n_coeffs):
                direction = derivatives[j] * (lam ** m)[None, :, None, None]
                real_cols.append(self.assemble(direction).flat())
                imag_cols.append(self.assemble(1j * direction).flat())
        return np.column_stack(real_cols + imag_cols)

    def _jacobian_columns(self, t: float, x: NoidParams) -> np.ndarray:
        u = flatten_free(x)

        def column(k: int) -> np.ndarray:
            h = self.settings.fd_step * (1 + abs(u[k]))
            plus, minus = u.copy(), u.copy()
            plus[k] += h
            minus[k] -= h
            r_plus = self.residual(t, unflatten_free(x, plus)).flat()
            r_minus = self.residual(t, unflatten_free(x, minus)).flat()
            return (r_plus - r_minus) / (2 * h)

        return np.column_stack(self._map(column, range(u.size)))

    def kernel_dimension(self, x: Optional[NoidParams] = None) -> int:
        """Real dimension of the kernel of the linearized system at t = 0."""
        result = self.jacobian(0.0, x or self.x0)
        return result.kernel_dimension(self.settings.rank_tol)

    # -- Newton and continuation

    def newton(self, t: float, guess: NoidParams) -> SolutionPoint:
        """Damped Newton with minimum-norm least-squares steps and Armijo backtracking."""
        tol = self.settings.solver_tol
        x = guess
        residual = self.residual(t, x)
        norm = residual.norm()
        for iteration in range(1, self.settings.newton_max_iter + 1):
            if norm <= tol:
                return SolutionPoint(t, x, norm, iteration - 1, residual.tail_mass)
            jacobian = self.jacobian(t, x).matrix
            step, *_ = np.linalg.lstsq(jacobian, -residual.flat(), rcond=None)
            u = flatten_free(x)
            alpha = 1.0
            while True:
                candidate = unflatten_free(x, u + alpha * step)
                trial = self.residual(t, candidate)
                if trial.norm() <= (1 - 1e-4 * alpha) * norm or trial.norm() <= tol:
                    break
                alpha *= 0.5
                if alpha < 1.0 / 64:
                    raise ConvergenceError(
                        f"Newton line search failed at t={t:g} (residual {norm:.3e})",
                        residual=norm,
                        iterations=iteration,
                    )
            x, residual, norm = candidate, trial, trial.norm()
            logger.info("newton t=%g iteration %d: residual %.3e (step %.3g)", t, iteration, norm, alpha)
        if norm <= tol:
            return SolutionPoint(t, x, norm, self.settings.newton_max_iter, residual.tail_mass)
        raise ConvergenceError(
            f"Newton did not reach {tol:g} at t={t:g} (residual {norm:.3e})",
            residual=norm,
            iterations=self.settings.newton_max_iter,
        )

    def check_precondition(self) -> None:
        expected = 3 * self.x0.n - 3
        rank, singular_values = nondegeneracy_rank(self.x0, self.settings)
        if rank != expected:
            raise PreconditionError(
                f"period map rank {rank} < {expected}; singular values {np.array2string(singular_values, precision=3)}"
            )
        if tuple(self.x0.frozen) != (0, 1, 2):
            raise PreconditionError("p_1, p_2, p_3 must be frozen")

    def solve(
        self,
        t_target: float,
        path: Optional[SolutionPath] = None,
        stops: Sequence[float] = (),
    ) -> SolutionPath:
        """Continue x(t) from the last solved point of the branch towards t_target."""
        path = path or SolutionPath([SolutionPoint(0.0, self.x0, 0.0, 0)])
        if path.at(0.0) is None:
            path.points.insert(0, SolutionPoint(0.0, self.x0, 0.0, 0))
        if t_target == 0:
            return path
        sign = float(np.sign(t_target))
        start = path.last(sign)
        previous = path.before(start)
        current = start
        targets = sorted({abs(s) for s in stops if np.sign(s) == sign and abs(s) < abs(t_target)} | {abs(t_target)})
        step = sign * self.settings.initial_step
        if previous is not None:
            # resumed branch: same step the uninterrupted run would take next
            step = sign * max(self.settings.initial_step, abs(start.t - previous.t))
            if start.iterations <= 3:
                step *= 2.0
        while abs(current.t) < abs(t_target):
            upcoming = next(target for target in targets if target > abs(current.t) * (1 + 1e-14))
            t_next = current.t + step
            if abs(t_next) >= upcoming * (1 - 1e-12):
                t_next = sign * upcoming
            guess = current.x
            if previous is not None and previous.t != current.t:
                ratio = (t_next - current.t) / (current.t - previous.t)
                guess = unflatten_free(current.x, flatten_free(current.x)
                                       + ratio * (flatten_free(current.x) - flatten_free(previous.x)))
            try:
                point = self.newton(t_next, guess)
            except SolverFailure as exc:
                step *= 0.5
                logger.warning("step to t=%g failed (%s); halving to %g", t_next, exc, step)
                if abs(step) < self.settings.min_step:
                    raise ContinuationError(
                        f"continuation stalled at t={current.t:g}",
                        last_t=current.t,
                        last_x=current.x,
                    ) from exc
                continue
            logger.info("accepted t=%g: residual %.3e after %d iterations", point.t, point.residual, point.iterations)
            if point.tail_mass > self.settings.solver_tol:
                logger.warning("tail mass %.3e at t=%g exceeds the solver tolerance", point.tail_mass, point.t)
            path.points.append(point)
            previous, current = current, point
            if point.iterations <= 3:
                step *= 2.0
        return path

    def monodromy_report(self, t: float, x: NoidParams) -> dict[str, float]:
        """Unitarity of M_i on the circle, M_i(1) = +-I and dM_i/dlambda(1) = 0."""
        samples = self.monodromy_samples(t, x)
        gram = np.conj(np.swapaxes(samples, -1, -2)) @ samples
        unitarity = float(np.max(np.abs(gram - np.eye(2))))
        at_one, slope = 0.0, 0.0
        for values in samples:
            M = LoopMatrix.from_samples(values, self.grid, x.rho)
            value = M.at_one()
            sign = 1.0 if np.real(np.trace(value)) >= 0 else -1.0
            at_one = max(at_one, float(np.max(np.abs(value - sign * np.eye(2)))))
            slope = max(slope, float(np.max(np.abs(M.derivative_at_one()))))
        mtilde = self.mtilde_samples(t, x)
        algebra = 0.0
        for values in mtilde:
            M = LoopMatrix.from_samples(values, self.grid, x.rho)
            algebra = max(algebra, M.su2_algebra_defect())
        return {"unitarity": unitarity, "value_at_one": at_one, "derivative_at_one": slope, "su2_defect": algebra}

