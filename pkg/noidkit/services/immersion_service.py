"""CMC immersion f_t, its normal and differential, and immersed meshes."""

import logging
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np

from noidkit.config import Settings, get_settings
from noidkit.core.iwasawa import iwasawa_factorization, normal_point, sym_point
from noidkit.core.loop_algebra import CircleGrid, LoopMatrix, Su2Vector, expm_traceless, inv_unimodular
from noidkit.core.paths import PathSpec, circle_path, straight_path
from noidkit.core.potential import DelaunayPotential, NoidPotential, Potential, rs_solve
from noidkit.core.transport import transport_y
from noidkit.core.weierstrass import NoidParams
from noidkit.errors import MonodromyLeakError, NoidKitError
from noidkit.services.meshing import ParameterMesh, SurfaceMesh, cotangent_mean_curvature, spanning_tree

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FramePoint:
    """Iwasawa factors of the frame at z and the potential that produced it."""

    z: complex
    F: LoopMatrix
    B: LoopMatrix
    xi: Potential
    residual: float
    tail_mass: float

    @property
    def f(self) -> np.ndarray:
        return sym_point(self.F, 1e-8).x

    @property
    def normal(self) -> np.ndarray:
        return normal_point(self.F, 1e-8).x


class FrameSource(ABC):
    """Frame Phi(z) reached along paths from the basepoint z0."""

    z0: complex
    grid: CircleGrid
    rho: float

    @abstractmethod
    def start(self) -> Any:
        """Transport state at z0."""

    @abstractmethod
    def advance(self, state: Any, path: PathSpec) -> Any:
        """Transport state along a path."""

    @abstractmethod
    def frame(self, state: Any, z: complex) -> tuple[np.ndarray, Potential]:
        """Frame samples (K, 2, 2) at z and the potential they solve."""


class NoidFrameSource(FrameSource):
    """Phi = Y Phi_0 for the n-noid potential; Y is transported by the rescaled equation.

    Where |g| > 1 the frame is gauged by [[1/g, -1], [0, g]], i.e.
    Phi G = Y [[1, 0], [-1/g, 1]], which stays finite at the roots of B.
    """

    def __init__(self, t: float, x: NoidParams, z0: complex = 0j, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()
        self.grid = CircleGrid(x.truncation)
        self.rho = x.rho
        self.z0 = complex(z0)
        self.potential = NoidPotential(t, x, self.grid, self.settings)
        self.regularized = self.potential.regularized()

    def start(self) -> np.ndarray:
        return np.broadcast_to(np.eye(2, dtype=complex), (self.grid.size, 2, 2)).copy()

    def advance(self, state: np.ndarray, path: PathSpec) -> np.ndarray:
        return transport_y(self.potential, path, state, self.settings)[0]

    def frame(self, state: np.ndarray, z: complex) -> tuple[np.ndarray, Potential]:
        data = self.potential.data
        A, B = data.A(z), data.B(z)
        if np.max(np.abs(A)) > np.max(np.abs(B)):
            gauge = np.zeros((self.grid.size, 2, 2), dtype=complex)
            gauge[:, 0, 0] = 1.0
            gauge[:, 1, 0] = -B / A
            gauge[:, 1, 1] = 1.0
            return state @ gauge, self.regularized
        return state @ self.potential.phi0(z), self.potential


class DelaunayFrameSource(FrameSource):
    """Closed-form frame exp(A_t log z) from Phi(1) = phi0, with log z continued along paths."""

    def __init__(self, t: float, truncation: int, rho: float = 2.0, phi0: Optional[np.ndarray] = None):
        self.grid = CircleGrid(truncation)
        self.rho = rho
        self.z0 = 1.0 + 0j
        pair = rs_solve(t)
        self.potential = DelaunayPotential(pair.r, pair.s, self.grid, rho)
        self.phi0 = np.eye(2, dtype=complex) if phi0 is None else np.asarray(phi0, dtype=complex)

    def start(self) -> complex:
        return 0j

    def advance(self, state: complex, path: PathSpec) -> complex:
        trace = path.sample(64)
        return state + complex(np.sum(np.log(trace[1:] / trace[:-1])))

    def frame(self, state: complex, z: complex) -> tuple[np.ndarray, Potential]:
        return self.phi0 @ expm_traceless(self.potential.residue * state), self.potential


def differential_at(F: LoopMatrix, B: LoopMatrix, xi: Potential, z: complex) -> tuple[np.ndarray, np.ndarray]:
    """df(d/dx), df(d/dy) from 2i B11(z,0)^2 F(z,1) [[0, beta], [conj beta, 0]] F(z,1)^-1."""
    beta = xi.evaluate(z).coefficient(-1)[0, 1]
    b11 = B.at_zero()[0, 0]
    F1 = F.at_one()
    F1_inv = inv_unimodular(F1)
    out = []
    for direction in (1.0, 1j):
        b = beta * direction
        X = 2j * b11 ** 2 * F1 @ np.array([[0, b], [np.conj(b), 0]]) @ F1_inv
        out.append(Su2Vector.from_matrix(X).x)
    return out[0], out[1]


class ImmersionService:
    """Frames, immersion and meshes for a frame source."""

    def __init__(self, source: FrameSource, settings: Optional[Settings] = None):
        """Initialize service with a frame source."""
        self.source = source
        self.settings = settings or get_settings()

    def _factor(self, phi: np.ndarray, xi: Potential, z: complex) -> FramePoint:
        loop = LoopMatrix.from_samples(phi, self.source.grid, self.source.rho, det_tag=True)
        result = iwasawa_factorization(loop, self.settings)
        return FramePoint(complex(z), result.F, result.B, xi, result.residual, result.tail_mass)

    def frame_at(self, z: complex, path: Optional[PathSpec] = None) -> FramePoint:
        """Transport to z (straight from z0 unless a path is given), then Iwasawa-factor."""
        path = path or straight_path(self.source.z0, z)
        state = self.source.advance(self.source.start(), path) if path.length > 0 else self.source.start()
        phi, xi = self.source.frame(state, z)
        return self._factor(phi, xi, z)

    def immerse(self, z: complex, paths: Sequence[PathSpec] = ()) -> tuple[np.ndarray, np.ndarray]:
        """f(z) and N(z); several paths are cross-checked against well_def_tol."""
        points = [self.frame_at(z, path) for path in paths] if paths else [self.frame_at(z)]
        values = [point.f for point in points]
        disagreement = max((float(np.linalg.norm(v - values[0])) for v in values[1:]), default=0.0)
        if disagreement > self.settings.well_def_tol:
            raise MonodromyLeakError(
                f"f({z}) differs by {disagreement:.3e} between homotopically distinct paths",
                disagreement=disagreement,
            )
        return values[0], points[0].normal

    def differential(self, point: FramePoint) -> tuple[np.ndarray, np.ndarray]:
        return differential_at(point.F, point.B, point.xi, point.z)

    def leak_around(self, center: complex, z: complex) -> float:
        """|f(gamma z) - f(z)| for the loop around ``center`` through z."""
        start = self.frame_at(z)
        radius = abs(z - center)
        loop = circle_path(center, radius, float(np.angle(z - center)))
        state = self.source.advance(self.source.advance(self.source.start(), straight_path(self.source.z0, z)), loop)
        phi, xi = self.source.frame(state, z)
        return float(np.linalg.norm(self._factor(phi, xi, z).f - start.f))

    def mesh(self, domain: ParameterMesh) -> SurfaceMesh:
        """Immerse every vertex; frames follow a breadth-first spanning tree from the vertex nearest z0."""
        points = domain.points
        count = points.size
        root = int(np.argmin(np.abs(points - self.source.z0)))
        states: list[Any] = [None] * count
        failed = np.zeros(count, dtype=bool)
        states[root] = self.source.start()
        if points[root] != self.source.z0:
            states[root] = self.source.advance(states[root], straight_path(self.source.z0, points[root]))
        for parent, child in spanning_tree(points, domain.faces, root):
            if states[parent] is None:
                failed[child] = True
                continue
            try:
                states[child] = self.source.advance(states[parent], straight_path(points[parent], points[child]))
            except NoidKitError as exc:
                logger.warning("transport to vertex %d failed: %s", child, exc)
                failed[child] = True

        def evaluate(v: int) -> Optional[FramePoint]:
            if states[v] is None:
                return None
            try:
                phi, xi = self.source.frame(states[v], points[v])
                return self._factor(phi, xi, points[v])
            except NoidKitError as exc:
                logger.warning("vertex %d at z = %s failed: %s", v, points[v], exc)
                return None

        if self.settings.workers > 1:
            with ThreadPoolExecutor(max_workers=self.settings.workers) as pool:
                frames = list(pool.map(evaluate, range(count)))
        else:
            frames = [evaluate(v) for v in range(count)]

        vertices = np.full((count, 3), np.nan)
        normals = np.full((count, 3), np.nan)
        residual = np.full(count, np.nan)
        tail = np.full(count, np.nan)
        status = []
        for v, point in enumerate(frames):
            if point is None:
                status.append("failed")
                continue
            vertices[v] = point.f
            normals[v] = point.normal
            residual[v] = point.residual
            tail[v] = point.tail_mass
            status.append("ok")

        ok = np.array([s == "ok" for s in status])
        faces = domain.faces[np.all(ok[domain.faces], axis=1)]
        curvature = np.full(count, np.nan)
        if faces.size:
            curvature = cotangent_mean_curvature(np.nan_to_num(vertices), faces, np.nan_to_num(normals))
        leak = self._ring_leaks(domain, states, frames)
        logger.info("mesh: %d of %d vertices immersed", int(ok.sum()), count)
        return SurfaceMesh(points, vertices, normals, faces, domain.region, residual, tail, curvature, leak, status)

    def _ring_leaks(self, domain: ParameterMesh, states: list, frames: list) -> np.ndarray:
        """Closure of f around every annulus ring, stored on the ring's first vertex."""
        leak = np.zeros(domain.size)
        for (end, _), ring in domain.rings.items():
            v = int(ring[0])
            if frames[v] is None:
                continue
            z = domain.points[v]
            center = domain.centers[end]
            loop = circle_path(center, abs(z - center), float(np.angle(z - center)))
            try:
                phi, xi = self.source.frame(self.source.advance(states[v], loop), z)
                leak[v] = float(np.linalg.norm(self._factor(phi, xi, z).f - frames[v].f))
            except NoidKitError as exc:
                logger.warning("ring closure at vertex %d failed: %s", v, exc)
                leak[v] = np.nan
        return leak


def frame_at(t: float, x: NoidParams, z: complex, path: Optional[PathSpec] = None, z0: complex = 0j,
             settings: Optional[Settings] = None) -> tuple[LoopMatrix, LoopMatrix]:
    """Iwasawa factors (F, B) of the n-noid frame at z."""
    point = ImmersionService(NoidFrameSource(t, x, z0, settings), settings).frame_at(z, path)
    return point.F, point.B


def immerse(t: float, x: NoidParams, z: complex, paths: Sequence[PathSpec] = (), z0: complex = 0j,
            settings: Optional[Settings] = None) -> tuple[np.ndarray, np.ndarray]:
    """f_t(z) and N(z) of the n-noid; distinct paths are checked for agreement."""
    return ImmersionService(NoidFrameSource(t, x, z0, settings), settings).immerse(z, paths)
