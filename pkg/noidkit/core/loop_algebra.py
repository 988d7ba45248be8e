"""Truncated Wiener-algebra arithmetic for scalar and 2x2 matrix loops.

A loop is a Laurent series in the spectral parameter lambda, truncated to the
powers -N..N and normed by sum |f_i| rho^|i|.  Matrix loops store their
coefficients in one array of shape (2, 2, 2N+1).  Pointwise operations
(exp, log, inversion) go through a uniform grid on the unit circle.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from numpy.polynomial import polynomial as P

from noidkit.errors import (
    DomainError,
    InvalidInputError,
    InvalidOperandError,
    NotNearIdentityError,
)

logger = logging.getLogger(__name__)

Scalar = Union[int, float, complex]


class Part(str, Enum):
    """Component of the direct sum W = W^- + W^0 + W^+."""
    minus = "minus"
    zero = "zero"
    plus = "plus"


def _as_coeffs(values: Iterable[complex]) -> np.ndarray:
    coeffs = np.array(values, dtype=complex)
    if coeffs.ndim != 1 or coeffs.size % 2 == 0 or coeffs.size < 3:
        raise InvalidInputError("coefficient vector must have odd length 2N+1 with N >= 1")
    return coeffs


def _pad(coeffs: np.ndarray, n: int) -> np.ndarray:
    """Zero-pad a coefficient array (last axis) to truncation n."""
    current = (coeffs.shape[-1] - 1) // 2
    if current == n:
        return coeffs
    if current > n:
        return coeffs[..., current - n: current + n + 1]
    width = [(0, 0)] * (coeffs.ndim - 1) + [(n - current, n - current)]
    return np.pad(coeffs, width)


def _weights(n: int, rho: float) -> np.ndarray:
    return rho ** np.abs(np.arange(-n, n + 1))


class CircleGrid:
    """Uniform samples of the unit circle used for pointwise loop operations."""

    def __init__(self, truncation: int, size: Optional[int] = None):
        self.truncation = truncation
        self.size = size if size is not None else 4 * truncation + 1
        if self.size < 2 * truncation + 1:
            raise InvalidInputError("grid too coarse for the truncation")
        self.points = np.exp(2j * np.pi * np.arange(self.size) / self.size)
        self._index = np.arange(-truncation, truncation + 1) % self.size
        self._frequencies = np.rint(np.fft.fftfreq(self.size, 1.0 / self.size)).astype(int)

    def to_samples(self, coeffs: np.ndarray) -> np.ndarray:
        """Values on the grid of coefficient arrays (last axis)."""
        coeffs = _pad(np.asarray(coeffs, dtype=complex), self.truncation)
        buffer = np.zeros(coeffs.shape[:-1] + (self.size,), dtype=complex)
        buffer[..., self._index] = coeffs
        return self.size * np.fft.ifft(buffer, axis=-1)

    def to_coeffs(self, samples: np.ndarray, rho: float) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients -N..N of grid values (last axis) and the weighted mass beyond N."""
        spectrum = np.fft.fft(np.asarray(samples, dtype=complex), axis=-1) / self.size
        coeffs = spectrum[..., self._index]
        outside = np.abs(self._frequencies) > self.truncation
        tail = np.sum(np.abs(spectrum[..., outside]) * rho ** np.abs(self._frequencies[outside]), axis=-1)
        return coeffs, tail


class LaurentLoop:
    """Truncated Laurent series sum f_i lambda^i, i in [-N, N]."""

    __slots__ = ("coeffs", "rho", "tail_mass")

    def __init__(self, coeffs: Iterable[complex], rho: float = 2.0, tail_mass: float = 0.0):
        if not rho > 1.0:
            raise InvalidInputError(f"weight rho must exceed 1, got {rho}")
        coeffs = _as_coeffs(coeffs)
        coeffs.setflags(write=False)
        self.coeffs = coeffs
        self.rho = float(rho)
        self.tail_mass = float(tail_mass)

    @property
    def truncation(self) -> int:
        return (self.coeffs.size - 1) // 2

    @classmethod
    def zeros(cls, truncation: int, rho: float = 2.0) -> "LaurentLoop":
        return cls(np.zeros(2 * truncation + 1), rho)

    @classmethod
    def constant(cls, value: Scalar, truncation: int, rho: float = 2.0) -> "LaurentLoop":
        return cls.from_terms({0: value}, truncation, rho)

    @classmethod
    def from_terms(cls, terms: dict[int, Scalar], truncation: int, rho: float = 2.0) -> "LaurentLoop":
        """Build a loop from a {power: coefficient} mapping."""
        coeffs = np.zeros(2 * truncation + 1, dtype=complex)
        for power, value in terms.items():
            if abs(power) > truncation:
                raise InvalidInputError(f"power {power} exceeds truncation {truncation}")
            coeffs[power + truncation] = value
        return cls(coeffs, rho)

    @classmethod
    def from_samples(cls, values: np.ndarray, grid: CircleGrid, rho: float = 2.0) -> "LaurentLoop":
        coeffs, tail = grid.to_coeffs(values, rho)
        return cls(coeffs, rho, float(tail))

    def __getitem__(self, power: int) -> complex:
        n = self.truncation
        if abs(power) > n:
            return 0j
        return complex(self.coeffs[power + n])

    def padded(self, truncation: int) -> "LaurentLoop":
        return LaurentLoop(_pad(self.coeffs, truncation), self.rho, self.tail_mass)

    def samples(self, grid: CircleGrid) -> np.ndarray:
        return grid.to_samples(self.coeffs)

    def _aligned(self, other: "LaurentLoop") -> tuple[np.ndarray, np.ndarray, int]:
        if not isinstance(other, LaurentLoop):
            raise InvalidOperandError(f"cannot combine a loop with {type(other).__name__}")
        if self.rho != other.rho:
            raise InvalidOperandError(f"weights differ: {self.rho} vs {other.rho}")
        n = max(self.truncation, other.truncation)
        return _pad(self.coeffs, n), _pad(other.coeffs, n), n

    def __add__(self, other: Union["LaurentLoop", Scalar]) -> "LaurentLoop":
        if not isinstance(other, LaurentLoop):
            other = LaurentLoop.constant(other, self.truncation, self.rho)
        a, b, _ = self._aligned(other)
        return LaurentLoop(a + b, self.rho, self.tail_mass + other.tail_mass)

    __radd__ = __add__

    def __neg__(self) -> "LaurentLoop":
        return LaurentLoop(-self.coeffs, self.rho, self.tail_mass)

    def __sub__(self, other: Union["LaurentLoop", Scalar]) -> "LaurentLoop":
        return self + (-other)

    def __rsub__(self, other: Scalar) -> "LaurentLoop":
        return (-self) + other

    def __mul__(self, other: Union["LaurentLoop", Scalar]) -> "LaurentLoop":
        if isinstance(other, LaurentLoop):
            return mul(self, other)
        return LaurentLoop(self.coeffs * complex(other), self.rho, self.tail_mass * abs(other))

    __rmul__ = __mul__

    def star(self) -> "LaurentLoop":
        return star(self)

    def project(self, part: Part) -> "LaurentLoop":
        return project(self, part)

    def norm(self) -> float:
        return wiener_norm(self)

    def __call__(self, point: complex) -> complex:
        return evaluate(self, point)

    def derivative(self) -> "LaurentLoop":
        """Termwise d/dlambda, kept on the same index range."""
        n = self.truncation
        powers = np.arange(-n, n + 1)
        shifted = np.zeros_like(self.coeffs)
        shifted[:-1] = (powers * self.coeffs)[1:]
        return LaurentLoop(shifted, self.rho)

    def is_nonnegative(self, tol: float = 0.0) -> bool:
        n = self.truncation
        return bool(np.all(np.abs(self.coeffs[:n]) <= tol))

    def allclose(self, other: "LaurentLoop", atol: float = 1e-12) -> bool:
        a, b, _ = self._aligned(other)
        return bool(np.max(np.abs(a - b)) <= atol)

    def to_text(self) -> str:
        """Debug dump, one 'i real imag' row per coefficient."""
        n = self.truncation
        return "\n".join(
            f"{i} {c.real!r} {c.imag!r}" for i, c in zip(range(-n, n + 1), self.coeffs)
        )

    @classmethod
    def from_text(cls, text: str, rho: float = 2.0) -> "LaurentLoop":
        rows = [line.split() for line in text.strip().splitlines() if line.strip()]
        terms = {int(i): complex(float(re), float(im)) for i, re, im in rows}
        n = max(abs(i) for i in terms)
        return cls.from_terms(terms, max(n, 1), rho)

    def __repr__(self) -> str:
        return f"LaurentLoop(N={self.truncation}, rho={self.rho}, norm={self.norm():.3e})"


def mul(a: LaurentLoop, b: LaurentLoop) -> LaurentLoop:
    """Cauchy product truncated back to [-N, N]."""
    x, y, n = a._aligned(b)
    full = np.convolve(x, y)
    kept = full[n: 3 * n + 1]
    dropped_powers = np.abs(np.concatenate([np.arange(-2 * n, -n), np.arange(n + 1, 2 * n + 1)]))
    dropped = np.concatenate([full[:n], full[3 * n + 1:]])
    tail = float(np.sum(np.abs(dropped) * a.rho ** dropped_powers))
    tail += a.tail_mass * wiener_norm(b) + b.tail_mass * wiener_norm(a)
    return LaurentLoop(kept, a.rho, tail)


def star(f: LaurentLoop) -> LaurentLoop:
    """(f*)_i = conj(f_{-i})."""
    return LaurentLoop(np.conj(f.coeffs[::-1]), f.rho, f.tail_mass)


def project(f: LaurentLoop, part: Union[Part, str]) -> LaurentLoop:
    part = Part(part)
    n = f.truncation
    powers = np.arange(-n, n + 1)
    if part is Part.minus:
        mask = powers < 0
    elif part is Part.zero:
        mask = powers == 0
    else:
        mask = powers > 0
    return LaurentLoop(np.where(mask, f.coeffs, 0), f.rho)


def wiener_norm(f: LaurentLoop) -> float:
    return float(np.sum(np.abs(f.coeffs) * _weights(f.truncation, f.rho)))


def evaluate(f: LaurentLoop, point: complex) -> complex:
    """Sum f_i point^i for 1/rho < |point| < rho."""
    point = complex(point)
    radius = abs(point)
    if not (1.0 / f.rho < radius < f.rho):
        raise DomainError(f"|lambda| = {radius} outside the annulus 1/{f.rho} < |lambda| < {f.rho}", value=point)
    n = f.truncation
    positive = P.polyval(point, f.coeffs[n:])
    negative = P.polyval(1.0 / point, np.concatenate([[0], f.coeffs[:n][::-1]]))
    return complex(positive + negative)


# ---------------------------------------------------------------------------
# pointwise 2x2 kernels, broadcasting over leading axes of shape (..., 2, 2)


def _sinhc(mu: np.ndarray) -> np.ndarray:
    mu = np.asarray(mu, dtype=complex)
    out = np.ones_like(mu)
    small = np.abs(mu) < 1e-4
    big = ~small
    out[big] = np.sinh(mu[big]) / mu[big]
    q = mu[small] ** 2
    out[small] = 1 + q / 6 + q * q / 120
    return out


def expm_traceless(X: np.ndarray) -> np.ndarray:
    """exp of traceless 2x2 matrices: cosh(mu) I + sinh(mu)/mu X with mu^2 = -det X."""
    X = np.asarray(X, dtype=complex)
    q = X[..., 0, 0] ** 2 + X[..., 0, 1] * X[..., 1, 0]
    mu = np.atleast_1d(np.sqrt(q))
    cosh = np.cosh(mu).reshape(q.shape)
    sinhc = _sinhc(mu).reshape(q.shape)
    eye = np.broadcast_to(np.eye(2, dtype=complex), X.shape)
    return cosh[..., None, None] * eye + sinhc[..., None, None] * X


def scaled_logm(D: np.ndarray, scale: Union[complex, np.ndarray] = 1.0) -> np.ndarray:
    """log(I + scale*D)/scale for 2x2 matrices near the identity.

    Stable as scale -> 0 (the limit is the traceless part of D); the
    determinant of I + scale*D is renormalized to 1 first.
    """
    D = np.asarray(D, dtype=complex)
    scale = np.broadcast_to(np.asarray(scale, dtype=complex), D.shape[:-2])
    tr = D[..., 0, 0] + D[..., 1, 1]
    det_d = D[..., 0, 0] * D[..., 1, 1] - D[..., 0, 1] * D[..., 1, 0]
    s = np.sqrt(1 + scale * tr + scale * scale * det_d)
    shift = -(tr + scale * det_d) / (1 + s)
    eye = np.eye(2, dtype=complex)
    Dn = (D + shift[..., None, None] * eye) / s[..., None, None]
    half = 0.5 * (Dn[..., 0, 0] + Dn[..., 1, 1])
    traceless = Dn - half[..., None, None] * eye
    delta = np.atleast_1d(scale * half)
    factor = np.empty_like(delta)
    small = np.abs(delta) < 1e-3
    d = delta[small]
    nu2 = 2 * d - d * d / 3 + 8 * d ** 3 / 45
    factor[small] = 1 - nu2 / 6 + 7 * nu2 ** 2 / 360 - 31 * nu2 ** 3 / 15120
    nu = np.arccosh(1 + delta[~small])
    factor[~small] = nu / np.sinh(nu)
    return factor.reshape(half.shape)[..., None, None] * traceless


def logm_unimodular(M: np.ndarray) -> np.ndarray:
    """Principal log of 2x2 matrices near I; the result is traceless."""
    M = np.asarray(M, dtype=complex)
    return scaled_logm(M - np.eye(2), 1.0)


def inv_unimodular(M: np.ndarray) -> np.ndarray:
    """Inverse via the adjugate, divided by the determinant."""
    M = np.asarray(M, dtype=complex)
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    adj = np.empty_like(M)
    adj[..., 0, 0] = M[..., 1, 1]
    adj[..., 1, 1] = M[..., 0, 0]
    adj[..., 0, 1] = -M[..., 0, 1]
    adj[..., 1, 0] = -M[..., 1, 0]
    return adj / det[..., None, None]


def det2(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M)
    return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]


# ---------------------------------------------------------------------------


class LoopMatrix:
    """2x2 matrix of loops sharing truncation and weight."""

    __slots__ = ("coeffs", "rho", "det_tag", "tail_mass")

    def __init__(self, coeffs: np.ndarray, rho: float = 2.0, det_tag: bool = False, tail_mass: float = 0.0):
        coeffs = np.array(coeffs, dtype=complex)
        if coeffs.ndim != 3 or coeffs.shape[:2] != (2, 2) or coeffs.shape[2] % 2 == 0 or coeffs.shape[2] < 3:
            raise InvalidInputError("matrix loop coefficients must have shape (2, 2, 2N+1)")
        if not rho > 1.0:
            raise InvalidInputError(f"weight rho must exceed 1, got {rho}")
        coeffs.setflags(write=False)
        self.coeffs = coeffs
        self.rho = float(rho)
        self.det_tag = det_tag
        self.tail_mass = float(tail_mass)

    @property
    def truncation(self) -> int:
        return (self.coeffs.shape[2] - 1) // 2

    @classmethod
    def from_entries(cls, entries: Sequence[Sequence[LaurentLoop]], det_tag: bool = False) -> "LoopMatrix":
        flat = [entry for row in entries for entry in row]
        rho = flat[0].rho
        if any(e.rho != rho for e in flat):
            raise InvalidOperandError("matrix entries use different weights")
        n = max(e.truncation for e in flat)
        coeffs = np.array([[_pad(e.coeffs, n) for e in row] for row in entries])
        return cls(coeffs, rho, det_tag, sum(e.tail_mass for e in flat))

    @classmethod
    def constant(cls, matrix: np.ndarray, truncation: int, rho: float = 2.0, det_tag: bool = False) -> "LoopMatrix":
        coeffs = np.zeros((2, 2, 2 * truncation + 1), dtype=complex)
        coeffs[:, :, truncation] = np.asarray(matrix, dtype=complex)
        return cls(coeffs, rho, det_tag)

    @classmethod
    def identity(cls, truncation: int, rho: float = 2.0) -> "LoopMatrix":
        return cls.constant(np.eye(2), truncation, rho, det_tag=True)

    @classmethod
    def zeros(cls, truncation: int, rho: float = 2.0) -> "LoopMatrix":
        return cls(np.zeros((2, 2, 2 * truncation + 1)), rho)

    @classmethod
    def from_samples(cls, samples: np.ndarray, grid: CircleGrid, rho: float = 2.0, det_tag: bool = False) -> "LoopMatrix":
        """From grid values shaped (K, 2, 2)."""
        coeffs, tail = grid.to_coeffs(np.moveaxis(np.asarray(samples), 0, -1), rho)
        return cls(coeffs, rho, det_tag, float(np.sum(tail)))

    def samples(self, grid: CircleGrid) -> np.ndarray:
        """Grid values shaped (K, 2, 2)."""
        return np.moveaxis(grid.to_samples(self.coeffs), -1, 0)

    def entry(self, i: int, j: int) -> LaurentLoop:
        return LaurentLoop(self.coeffs[i, j], self.rho)

    def coefficient(self, power: int) -> np.ndarray:
        n = self.truncation
        if abs(power) > n:
            return np.zeros((2, 2), dtype=complex)
        return np.array(self.coeffs[:, :, power + n])

    def padded(self, truncation: int) -> "LoopMatrix":
        return LoopMatrix(_pad(self.coeffs, truncation), self.rho, self.det_tag, self.tail_mass)

    def _aligned(self, other: "LoopMatrix") -> tuple[np.ndarray, np.ndarray, int]:
        if not isinstance(other, LoopMatrix):
            raise InvalidOperandError(f"cannot combine a matrix loop with {type(other).__name__}")
        if self.rho != other.rho:
            raise InvalidOperandError(f"weights differ: {self.rho} vs {other.rho}")
        n = max(self.truncation, other.truncation)
        return _pad(self.coeffs, n), _pad(other.coeffs, n), n

    def __add__(self, other: "LoopMatrix") -> "LoopMatrix":
        a, b, _ = self._aligned(other)
        return LoopMatrix(a + b, self.rho, False, self.tail_mass + other.tail_mass)

    def __sub__(self, other: "LoopMatrix") -> "LoopMatrix":
        a, b, _ = self._aligned(other)
        return LoopMatrix(a - b, self.rho, False, self.tail_mass + other.tail_mass)

    def __neg__(self) -> "LoopMatrix":
        return LoopMatrix(-self.coeffs, self.rho, self.det_tag, self.tail_mass)

    def __mul__(self, scalar: Scalar) -> "LoopMatrix":
        return LoopMatrix(self.coeffs * complex(scalar), self.rho, False, self.tail_mass * abs(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other: "LoopMatrix") -> "LoopMatrix":
        a, b, n = self._aligned(other)
        kept = np.zeros((2, 2, 2 * n + 1), dtype=complex)
        dropped = 0.0
        outer = np.abs(np.concatenate([np.arange(-2 * n, -n), np.arange(n + 1, 2 * n + 1)]))
        for i in range(2):
            for k in range(2):
                full = np.convolve(a[i, 0], b[0, k]) + np.convolve(a[i, 1], b[1, k])
                kept[i, k] = full[n: 3 * n + 1]
                tail = np.concatenate([full[:n], full[3 * n + 1:]])
                dropped += float(np.sum(np.abs(tail) * self.rho ** outer))
        tail_mass = dropped + self.tail_mass * other.norm() + other.tail_mass * self.norm()
        return LoopMatrix(kept, self.rho, self.det_tag and other.det_tag, tail_mass)

    def star(self) -> "LoopMatrix":
        """Entrywise star of the transpose: the adjoint on the unit circle."""
        return LoopMatrix(np.conj(self.coeffs.transpose(1, 0, 2)[:, :, ::-1]), self.rho, self.det_tag, self.tail_mass)

    def project(self, part: Union[Part, str]) -> "LoopMatrix":
        part = Part(part)
        n = self.truncation
        powers = np.arange(-n, n + 1)
        mask = {Part.minus: powers < 0, Part.zero: powers == 0, Part.plus: powers > 0}[part]
        return LoopMatrix(np.where(mask, self.coeffs, 0), self.rho)

    def trace(self) -> LaurentLoop:
        return LaurentLoop(self.coeffs[0, 0] + self.coeffs[1, 1], self.rho)

    def det(self) -> LaurentLoop:
        return mul(self.entry(0, 0), self.entry(1, 1)) - mul(self.entry(0, 1), self.entry(1, 0))

    def inverse(self, grid: Optional[CircleGrid] = None) -> "LoopMatrix":
        """Pointwise inverse re-expanded on a circle grid."""
        grid = grid or CircleGrid(self.truncation)
        values = self.samples(grid)
        if np.min(np.abs(det2(values))) < 1e-300:
            raise InvalidInputError("matrix loop is singular on the unit circle")
        return LoopMatrix.from_samples(inv_unimodular(values), grid, self.rho, self.det_tag)

    def __call__(self, point: complex) -> np.ndarray:
        return self.evaluate(point)

    def evaluate(self, point: complex) -> np.ndarray:
        return np.array([[evaluate(self.entry(i, j), point) for j in range(2)] for i in range(2)])

    def at_one(self) -> np.ndarray:
        return np.sum(self.coeffs, axis=2)

    def derivative_at_one(self) -> np.ndarray:
        """d/dlambda at lambda = 1 by termwise differentiation, sum i F_i."""
        n = self.truncation
        return np.tensordot(self.coeffs, np.arange(-n, n + 1), axes=([2], [0]))

    def at_zero(self) -> np.ndarray:
        """Value at lambda = 0 of a loop in W^{>=0}."""
        return self.coefficient(0)

    def norm(self) -> float:
        """Row-sum Wiener norm, submultiplicative."""
        weights = _weights(self.truncation, self.rho)
        entry_norms = np.sum(np.abs(self.coeffs) * weights, axis=2)
        return float(np.max(np.sum(entry_norms, axis=1)))

    def max_abs_diff(self, other: "LoopMatrix") -> float:
        a, b, _ = self._aligned(other)
        return float(np.max(np.abs(a - b)))

    # subgroup and subalgebra predicates

    def det_deviation(self, grid: Optional[CircleGrid] = None) -> float:
        grid = grid or CircleGrid(self.truncation)
        return float(np.max(np.abs(det2(self.samples(grid)) - 1)))

    def is_plus(self, tol: float = 1e-9) -> bool:
        n = self.truncation
        negative = np.max(np.abs(self.coeffs[:, :, :n]), initial=0.0)
        return bool(negative <= tol and abs(self.coeffs[1, 0, n]) <= tol)

    def is_plus_real(self, tol: float = 1e-9) -> bool:
        if not self.is_plus(tol):
            return False
        diagonal = np.diag(self.at_zero())
        return bool(np.all(np.abs(diagonal.imag) <= tol) and np.all(diagonal.real > 0))

    def unitarity_defect(self, samples: Optional[int] = None) -> float:
        grid = CircleGrid(self.truncation, samples)
        values = self.samples(grid)
        gram = np.conj(np.swapaxes(values, -1, -2)) @ values
        return float(max(np.max(np.abs(gram - np.eye(2))), np.max(np.abs(det2(values) - 1))))

    def is_unitary_on_circle(self, tol: float = 1e-9, samples: Optional[int] = None) -> bool:
        return self.unitarity_defect(samples) <= tol

    def su2_algebra_defect(self) -> float:
        """Max coefficient of M11 + M11* and M12 + M21*."""
        f = self.entry(0, 0) + star(self.entry(0, 0))
        g = self.entry(0, 1) + star(self.entry(1, 0))
        return float(max(np.max(np.abs(f.coeffs)), np.max(np.abs(g.coeffs))))

    def is_traceless(self, tol: float = 1e-9) -> bool:
        return bool(np.max(np.abs(self.coeffs[0, 0] + self.coeffs[1, 1])) <= tol)

    def to_text(self) -> str:
        blocks = []
        for i in range(2):
            for j in range(2):
                blocks.append(f"# entry {i}{j}\n" + self.entry(i, j).to_text())
        return "\n".join(blocks)

    def __repr__(self) -> str:
        return f"LoopMatrix(N={self.truncation}, rho={self.rho}, norm={self.norm():.3e})"


def loop_exp(A: LoopMatrix, grid: Optional[CircleGrid] = None, tol: float = 1e-9) -> LoopMatrix:
    """exp of a traceless matrix loop, pointwise on the circle grid."""
    if not A.is_traceless(tol * max(1.0, A.norm())):
        raise InvalidInputError("loop_exp expects a traceless matrix loop")
    grid = grid or CircleGrid(A.truncation)
    values = expm_traceless(A.samples(grid))
    return LoopMatrix.from_samples(values, grid, A.rho, det_tag=True)


def loop_log(M: LoopMatrix, grid: Optional[CircleGrid] = None, log_radius: float = 0.5) -> LoopMatrix:
    """log of a matrix loop with ||M - I|| < log_radius on the circle."""
    grid = grid or CircleGrid(M.truncation)
    values = M.samples(grid)
    distance = float(np.max(np.linalg.norm(values - np.eye(2), ord=2, axis=(-2, -1))))
    if distance >= log_radius:
        raise NotNearIdentityError(
            f"||M - I|| = {distance:.3e} exceeds the log radius {log_radius}", distance=distance
        )
    return LoopMatrix.from_samples(logm_unimodular(values), grid, M.rho)


@dataclass(frozen=True)
class Su2Vector:
    """Point of R^3 in the su(2) matrix model X = -i [[-x3, x1 + i x2], [x1 - i x2, x3]]."""

    x: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        vec = np.asarray(self.x, dtype=float).reshape(3)
        object.__setattr__(self, "x", vec)

    @property
    def matrix(self) -> np.ndarray:
        x1, x2, x3 = self.x
        return -1j * np.array([[-x3, x1 + 1j * x2], [x1 - 1j * x2, x3]])

    @classmethod
    def from_matrix(cls, X: np.ndarray) -> "Su2Vector":
        """Inverse of the model map on the anti-hermitian traceless part of X."""
        K = 1j * np.asarray(X, dtype=complex)
        off = 0.5 * (K[0, 1] + np.conj(K[1, 0]))
        x3 = 0.5 * (K[1, 1] - K[0, 0]).real
        return cls(np.array([off.real, off.imag, x3]))

    def norm(self) -> float:
        return float(np.linalg.norm(self.x))

    def __iter__(self):
        return iter(self.x)


E1 = Su2Vector(np.array([1.0, 0.0, 0.0])).matrix
E2 = Su2Vector(np.array([0.0, 1.0, 0.0])).matrix
E3 = Su2Vector(np.array([0.0, 0.0, 1.0])).matrix
