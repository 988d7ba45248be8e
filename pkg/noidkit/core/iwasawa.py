"""Iwasawa factorization Phi = F B of matrix loops.

F is unitary on the unit circle, B extends holomorphically to the unit disk
with B(0) upper triangular and a positive diagonal.  The factorization is a
spectral factorization of P = Phi^* Phi = B^* B computed with Wilson's
Newton iteration on circle samples, followed by the phase-fixed QR
normalization of B(0).
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from noidkit.config import Settings, get_settings
from noidkit.core.loop_algebra import (
    CircleGrid,
    LoopMatrix,
    Su2Vector,
    det2,
    inv_unimodular,
)
from noidkit.errors import ConvergenceError, InvalidInputError

logger = logging.getLogger(__name__)

_DIAG_E3 = np.diag([-1.0, 1.0])


@dataclass(frozen=True)
class IwasawaResult:
    """Factors of Phi = F B with factorization diagnostics."""
    F: LoopMatrix
    B: LoopMatrix
    residual: float
    iterations: int
    tail_mass: float


def phase_fixed_qr(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """QR decomposition with a real positive diagonal in R."""
    Q, R = np.linalg.qr(np.asarray(matrix, dtype=complex))
    diagonal = np.diagonal(R)
    phases = diagonal / np.abs(diagonal)
    Q = Q * phases[None, :]
    R = np.conj(phases)[:, None] * R
    return Q, R


def _hermitian(values: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(values, -1, -2))


def _spectral_factor(P: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, float, int]:
    """Wilson iteration for P = B^* B with B analytic in the disk; P given on circle samples.

    Each sweep is the Newton step for B^* B = P on the Fourier side. At most
    ``max_iter`` sweeps; the step is halved while the misfit grows.
    """
    size = P.shape[0]
    frequencies = np.rint(np.fft.fftfreq(size, 1.0 / size)).astype(int)
    plus_mask = np.where(frequencies > 0, 1.0, np.where(frequencies == 0, 0.5, 0.0))[:, None, None]
    identity = np.eye(2)
    scale = float(np.max(np.abs(P)))

    def misfit(B: np.ndarray) -> float:
        return float(np.max(np.abs(_hermitian(B) @ B - P))) / scale

    B = np.broadcast_to(_hermitian(np.linalg.cholesky(P[0])), P.shape).copy()
    residual = misfit(B)
    iterations = 0
    while residual > tol and iterations < max_iter:
        iterations += 1
        B_inv = inv_unimodular(B)
        h = _hermitian(B_inv) @ P @ B_inv + identity
        h_plus = np.fft.ifft(np.fft.fft(h, axis=0) * plus_mask, axis=0)
        step = h_plus @ B - B
        damping = 1.0
        candidate = B + step
        trial = misfit(candidate)
        while trial > residual and damping > 1e-3:
            damping *= 0.5
            candidate = B + damping * step
            trial = misfit(candidate)
        logger.debug("wilson sweep %d: residual %.3e (damping %.3g)", iterations, trial, damping)
        if trial >= residual and damping <= 1e-3:
            break
        B, residual = candidate, trial
    return B, residual, iterations


def iwasawa_factorization(
    phi: LoopMatrix,
    settings: Optional[Settings] = None,
    grid_size: Optional[int] = None,
) -> IwasawaResult:
    """Iwasawa factorization with diagnostics."""
    settings = settings or get_settings()
    n = phi.truncation
    grid = CircleGrid(n, grid_size or max(8 * n + 1, 65))
    values = phi.samples(grid)
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("frame has non-finite coefficients")
    det = det2(values)
    if np.min(np.abs(det)) < 1e-14:
        raise InvalidInputError("frame is singular at a circle sample")
    magnitude = max(1.0, float(np.max(np.abs(values))) ** 2)
    drift = float(np.max(np.abs(det - 1)))
    if drift > settings.det_tol * magnitude:
        raise InvalidInputError(f"det(Phi) deviates from 1 by {drift:.3e}")
    values = values / np.sqrt(det)[:, None, None]

    P = _hermitian(values) @ values
    B_samples, residual, iterations = _spectral_factor(P, 0.1 * settings.iwasawa_tol, settings.iwasawa_max_iter)
    if residual > settings.iwasawa_tol:
        raise ConvergenceError(
            f"spectral factorization stalled at residual {residual:.3e}",
            residual=residual,
            iterations=iterations,
        )

    spectrum = np.fft.fft(B_samples, axis=0) / grid.size
    frequencies = np.rint(np.fft.fftfreq(grid.size, 1.0 / grid.size)).astype(int)
    kept = (frequencies >= 0) & (frequencies <= n)
    weights = phi.rho ** np.abs(frequencies)
    tail = float(np.sum(np.abs(spectrum[~kept]) * weights[~kept, None, None]))

    B_coeffs = np.zeros((2, 2, 2 * n + 1), dtype=complex)
    B_coeffs[:, :, n:] = np.moveaxis(spectrum[frequencies >= 0][: n + 1], 0, -1)
    Q, R = phase_fixed_qr(B_coeffs[:, :, n])
    B_coeffs = np.einsum("ij,jkl->ikl", _hermitian(Q), B_coeffs)
    B_coeffs[:, :, n] = np.triu(R)
    B = LoopMatrix(B_coeffs, phi.rho, det_tag=True, tail_mass=tail)

    F_samples = values @ inv_unimodular(B.samples(grid))
    F = LoopMatrix.from_samples(F_samples, grid, phi.rho, det_tag=True)
    return IwasawaResult(F=F, B=B, residual=residual, iterations=iterations, tail_mass=tail + F.tail_mass)


def iwasawa(phi: LoopMatrix, settings: Optional[Settings] = None) -> tuple[LoopMatrix, LoopMatrix]:
    """Split Phi = F B with F in Lambda SU(2) and B in Lambda_+^R SL(2, C)."""
    result = iwasawa_factorization(phi, settings)
    return result.F, result.B


def _check_traceless(M: LoopMatrix, tol: float) -> None:
    if not M.is_traceless(tol * max(1.0, M.norm())):
        raise InvalidInputError("splitting expects a traceless matrix loop")


def uni_split(M: LoopMatrix, tol: float = 1e-9) -> LoopMatrix:
    """Lambda su(2) component of a traceless loop."""
    _check_traceless(M, tol)
    n = M.truncation
    C = M.coeffs
    out = np.zeros_like(C)
    for power in range(-n, 0):
        block = C[:, :, power + n]
        out[:, :, power + n] += block
        out[:, :, -power + n] -= _hermitian(block)
    a0, c0 = C[0, 0, n], C[1, 0, n]
    out[:, :, n] = [[1j * a0.imag, -np.conj(c0)], [c0, -1j * a0.imag]]
    return LoopMatrix(out, M.rho)


def pos_split(M: LoopMatrix, tol: float = 1e-9) -> LoopMatrix:
    """Lambda_+^R sl(2, C) component; uni_split(M) + pos_split(M) = M."""
    return LoopMatrix(M.coeffs - uni_split(M, tol).coeffs, M.rho)


def _require_unitary(F: LoopMatrix, tol: float) -> None:
    defect = F.unitarity_defect()
    if defect > tol:
        raise InvalidInputError(f"frame is not unitary on the circle (defect {defect:.3e})")


def sym_matrix(F: LoopMatrix) -> np.ndarray:
    return -2j * F.derivative_at_one() @ inv_unimodular(F.at_one())


def sym_point(F: LoopMatrix, tol: float = 1e-9) -> Su2Vector:
    """f = -2i dF/dlambda(1) F(1)^-1 as a point of R^3."""
    _require_unitary(F, tol)
    return Su2Vector.from_matrix(sym_matrix(F))


def normal_point(F: LoopMatrix, tol: float = 1e-9) -> Su2Vector:
    """N = -i F(1) diag(-1, 1) F(1)^-1 as a unit vector."""
    _require_unitary(F, tol)
    F1 = F.at_one()
    return Su2Vector.from_matrix(-1j * F1 @ _DIAG_E3 @ inv_unimodular(F1))
