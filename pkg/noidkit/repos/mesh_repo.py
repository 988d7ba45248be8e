import csv
import logging
from pathlib import Path

import meshio
import numpy as np

from noidkit.errors import ArtifactError
from noidkit.services.meshing import SurfaceMesh

logger = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = ("index", "z_re", "z_im", "iwasawa_residual", "tail_mass", "mean_curvature", "leak", "status")


def _cell(value: float) -> str:
    return "nan" if not np.isfinite(value) else repr(float(value))


class MeshRepo:
    """Repository for immersed meshes (OBJ) and their per-vertex diagnostics (TSV)."""

    def __init__(self, root: Path):
        """Initialize repository with its output directory."""
        self.root = Path(root)

    def to_meshio(self, mesh: SurfaceMesh) -> meshio.Mesh:
        """Vertices in z-sample order; failed vertices sit at the origin and belong to no face."""
        return meshio.Mesh(
            np.nan_to_num(mesh.vertices),
            [("triangle", mesh.faces)],
            point_data={"obj:vn": np.nan_to_num(mesh.normals)},
        )

    def save_mesh(self, mesh: SurfaceMesh, name: str) -> tuple[Path, Path]:
        """Write name.obj and name.tsv; returns both paths."""
        obj_path = self.root / f"{name}.obj"
        tsv_path = self.root / f"{name}.tsv"
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            meshio.write(obj_path, self.to_meshio(mesh), file_format="obj")
            self.write_diagnostics(mesh, tsv_path)
        except OSError as exc:
            raise ArtifactError(f"cannot write mesh {name}: {exc}", path=str(self.root)) from exc
        logger.info("mesh written to %s (%d vertices, %d faces)", obj_path, mesh.vertices.shape[0], mesh.faces.shape[0])
        return obj_path, tsv_path

    def write_diagnostics(self, mesh: SurfaceMesh, path: Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, dialect="excel-tab")
            writer.writerow(DIAGNOSTIC_COLUMNS)
            for v, z in enumerate(mesh.z):
                writer.writerow([
                    v,
                    _cell(z.real),
                    _cell(z.imag),
                    _cell(mesh.iwasawa_residual[v]),
                    _cell(mesh.tail_mass[v]),
                    _cell(mesh.mean_curvature[v]),
                    _cell(mesh.leak[v]),
                    mesh.status[v],
                ])

    def load_diagnostics(self, name: str) -> list[dict[str, str]]:
        path = self.root / f"{name}.tsv"
        try:
            with open(path, newline="", encoding="utf-8") as handle:
                return list(csv.DictReader(handle, dialect="excel-tab"))
        except OSError as exc:
            raise ArtifactError(f"cannot read {path}: {exc}", path=str(path)) from exc

    def load_mesh(self, name: str) -> meshio.Mesh:
        path = self.root / f"{name}.obj"
        try:
            return meshio.read(path)
        except OSError as exc:
            raise ArtifactError(f"cannot read {path}: {exc}", path=str(path)) from exc
