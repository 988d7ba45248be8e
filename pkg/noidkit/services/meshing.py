"""Parameter-domain meshes, spanning trees and discrete surface diagnostics."""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import Delaunay, cKDTree

logger = logging.getLogger(__name__)


@dataclass
class ParameterMesh:
    """Triangulated region of the z-plane.

    region[v] is the end index of annulus vertices and -1 for the core.
    rings[(end, k)] lists the vertices of ring k of an annulus in angular order.
    """

    points: np.ndarray
    faces: np.ndarray
    region: np.ndarray
    rings: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    centers: tuple[complex, ...] = ()

    @property
    def size(self) -> int:
        return self.points.size


@dataclass
class SurfaceMesh:
    """Immersed mesh with per-vertex diagnostics; one vertex per z-sample."""

    z: np.ndarray
    vertices: np.ndarray
    normals: np.ndarray
    faces: np.ndarray
    region: np.ndarray
    iwasawa_residual: np.ndarray
    tail_mass: np.ndarray
    mean_curvature: np.ndarray
    leak: np.ndarray
    status: list[str]

    @property
    def ok(self) -> np.ndarray:
        return np.array([s == "ok" for s in self.status])


def ring_radii(r_out: float, ratio: float, rings: int) -> np.ndarray:
    """Geometric radii r_out, r_out / ratio, ... towards the puncture."""
    return r_out * ratio ** -np.arange(rings, dtype=float)


def _annulus(center: complex, radii: np.ndarray, sectors: int, offset: int) -> tuple[np.ndarray, np.ndarray, list]:
    theta = 2 * np.pi * np.arange(sectors) / sectors
    points = (center + radii[:, None] * np.exp(1j * theta)[None, :]).ravel()
    index = offset + np.arange(radii.size * sectors).reshape(radii.size, sectors)
    faces = []
    for k in range(radii.size - 1):
        for j in range(sectors):
            jn = (j + 1) % sectors
            outer_a, outer_b = index[k, j], index[k, jn]
            inner_a, inner_b = index[k + 1, j], index[k + 1, jn]
            faces.append((inner_a, outer_b, outer_a))
            faces.append((inner_a, inner_b, outer_b))
    return points, np.array(faces, dtype=int).reshape(-1, 3), list(index)


def _orient(points: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Counter-clockwise faces in the z-plane."""
    a, b, c = (points[faces[:, k]] for k in range(3))
    signed = ((b - a) * np.conj(c - a)).imag
    flipped = faces.copy()
    flipped[signed > 0] = faces[signed > 0][:, [0, 2, 1]]
    return flipped


def annulus_mesh(r_in: float, r_out: float, ratio: float, sectors: int, center: complex = 0j) -> ParameterMesh:
    """Polar annulus r_in <= |z - center| <= r_out with geometric rings."""
    rings = int(np.ceil(np.log(r_out / r_in) / np.log(ratio))) + 1
    radii = ring_radii(r_out, ratio, rings)
    points, faces, index = _annulus(center, radii, sectors, 0)
    mesh = ParameterMesh(points, _orient(points, faces), np.zeros(points.size, dtype=int), centers=(complex(center),))
    mesh.rings = {(0, k): np.asarray(row) for k, row in enumerate(index)}
    return mesh


def noid_mesh(
    ends: Sequence[complex],
    eps: float,
    ratio: float = 1.2,
    rings: int = 12,
    sectors: int = 24,
    spacing: Optional[float] = None,
    extent: Optional[float] = None,
) -> ParameterMesh:
    """Polar annuli of outer radius 2 eps around every end plus a Delaunay-triangulated core."""
    ends = np.asarray(ends, dtype=complex)
    r_out = 2 * eps
    radii = ring_radii(r_out, ratio, rings)
    spacing = spacing or eps
    extent = extent or float(np.max(np.abs(ends))) + 6 * eps

    points, faces, regions, ring_index = [], [], [], {}
    offset = 0
    for i, center in enumerate(ends):
        p, f, index = _annulus(center, radii, sectors, offset)
        points.append(p)
        faces.append(f)
        regions.append(np.full(p.size, i))
        ring_index.update({(i, k): np.asarray(row) for k, row in enumerate(index)})
        offset += p.size

    axis = np.arange(-extent, extent + 0.5 * spacing, spacing)
    grid = (axis[:, None] + 1j * axis[None, :]).ravel()
    keep = np.abs(grid) <= extent
    for center in ends:
        keep &= np.abs(grid - center) > r_out + 0.5 * spacing
    core = grid[keep]
    points.append(core)
    regions.append(np.full(core.size, -1))

    outer = np.concatenate([ring_index[(i, 0)] for i in range(ends.size)])
    all_points = np.concatenate(points)
    core_index = np.concatenate([outer, offset + np.arange(core.size)])
    triangulation = Delaunay(np.column_stack([all_points[core_index].real, all_points[core_index].imag]))
    simplices = core_index[triangulation.simplices]

    apothem = r_out * np.cos(np.pi / sectors) * (1 - 1e-6)
    corners = all_points[simplices]
    centroids = corners.mean(axis=1)
    midpoints = 0.5 * (corners + np.roll(corners, -1, axis=1))
    inside = np.zeros(simplices.shape[0], dtype=bool)
    for center in ends:
        inside |= np.abs(centroids - center) < apothem
        inside |= np.any(np.abs(midpoints - center) < apothem, axis=1)
    faces.append(simplices[~inside])

    all_faces = _orient(all_points, np.concatenate(faces))
    logger.info("noid mesh: %d vertices, %d faces", all_points.size, all_faces.shape[0])
    return ParameterMesh(all_points, all_faces, np.concatenate(regions), ring_index, tuple(complex(p) for p in ends))


def adjacency(n_vertices: int, faces: np.ndarray) -> list[set[int]]:
    neighbours = [set() for _ in range(n_vertices)]
    for a, b, c in faces:
        neighbours[a].update((b, c))
        neighbours[b].update((a, c))
        neighbours[c].update((a, b))
    return neighbours


def spanning_tree(points: np.ndarray, faces: np.ndarray, root: int) -> list[tuple[int, int]]:
    """(parent, child) edges in breadth-first order from root."""
    neighbours = adjacency(points.size, faces)
    seen = {root}
    order = []
    queue = deque([root])
    while queue:
        parent = queue.popleft()
        for child in sorted(neighbours[parent], key=lambda v: abs(points[v] - points[parent])):
            if child not in seen:
                seen.add(child)
                order.append((parent, child))
                queue.append(child)
    return order


def boundary_vertices(n_vertices: int, faces: np.ndarray) -> np.ndarray:
    """Mask of vertices on edges used by a single face."""
    edges = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
    unique, counts = np.unique(edges, axis=0, return_counts=True)
    mask = np.zeros(n_vertices, dtype=bool)
    mask[unique[counts == 1].ravel()] = True
    return mask


def cotangent_mean_curvature(vertices: np.ndarray, faces: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Signed mean curvature from the cotangent Laplacian with mixed Voronoi areas.

    Delta f = 2 H N; the magnitude is |Delta f| / 2 and the sign that of <Delta f, N>.
    """
    laplace = np.zeros_like(vertices)
    area = np.zeros(vertices.shape[0])
    for face in faces:
        p = vertices[face]
        edges = [p[2] - p[1], p[0] - p[2], p[1] - p[0]]
        double_area = np.linalg.norm(np.cross(edges[0], edges[1]))
        if double_area <= 1e-300:
            continue
        cot = []
        for k in range(3):
            u, v = -edges[(k + 2) % 3], edges[(k + 1) % 3]
            cot.append(np.dot(u, v) / double_area)
        for k in range(3):
            i, j, m = face[k], face[(k + 1) % 3], face[(k + 2) % 3]
            laplace[i] += cot[(k + 2) % 3] * (vertices[j] - vertices[i]) + cot[(k + 1) % 3] * (vertices[m] - vertices[i])
        obtuse = [np.dot(-edges[(k + 2) % 3], edges[(k + 1) % 3]) < 0 for k in range(3)]
        for k in range(3):
            if any(obtuse):
                area[face[k]] += double_area / 4 if obtuse[k] else double_area / 8
            else:
                to_j = np.dot(edges[(k + 2) % 3], edges[(k + 2) % 3])
                to_m = np.dot(edges[(k + 1) % 3], edges[(k + 1) % 3])
                area[face[k]] += (to_j * cot[(k + 2) % 3] + to_m * cot[(k + 1) % 3]) / 8
    with np.errstate(invalid="ignore", divide="ignore"):
        delta = laplace / (2 * area[:, None])
    magnitude = 0.5 * np.linalg.norm(delta, axis=1)
    sign = np.sign(np.einsum("ij,ij->i", delta, normals))
    return np.where(sign == 0, 1.0, sign) * magnitude


def _segment_hits_triangle(p: np.ndarray, q: np.ndarray, tri: np.ndarray, tol: float = 1e-12) -> bool:
    direction = q - p
    e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
    h = np.cross(direction, e2)
    det = np.dot(e1, h)
    if abs(det) < tol:
        return False
    s = p - tri[0]
    u = np.dot(s, h) / det
    if u < 0 or u > 1:
        return False
    qv = np.cross(s, e1)
    v = np.dot(direction, qv) / det
    if v < 0 or u + v > 1:
        return False
    w = np.dot(e2, qv) / det
    return 0.0 < w < 1.0


def triangles_intersect(a: np.ndarray, b: np.ndarray) -> bool:
    for first, second in ((a, b), (b, a)):
        for k in range(3):
            if _segment_hits_triangle(first[k], first[(k + 1) % 3], second):
                return True
    return False


def self_intersections(vertices: np.ndarray, faces: np.ndarray) -> int:
    """Count intersecting pairs of triangles that share no vertex."""
    if faces.shape[0] < 2:
        return 0
    corners = vertices[faces]
    centroids = corners.mean(axis=1)
    reach = float(np.max(np.linalg.norm(corners - centroids[:, None, :], axis=2)))
    tree = cKDTree(centroids)
    hits = 0
    for i, j in tree.query_pairs(2 * reach):
        if set(faces[i]) & set(faces[j]):
            continue
        if triangles_intersect(corners[i], corners[j]):
            hits += 1
    return hits
