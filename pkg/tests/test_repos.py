import numpy as np
import pytest
from pydantic import ValidationError

from noidkit.errors import ArtifactError
from noidkit.repos.artifact_repo import ArtifactRepo, load_config
from noidkit.repos.mesh_repo import DIAGNOSTIC_COLUMNS, MeshRepo
from noidkit.schemas.report import Check, ValidationReport
from noidkit.schemas.run import ParamsSchema, Provenance, RunArtifact, RunConfig
from noidkit.services.meshing import SurfaceMesh


@pytest.fixture
def artifact(trinoid):
    """Artifact with central parameters and a residual entry."""
    return RunArtifact(
        config=RunConfig(truncation=trinoid.truncation),
        x0=ParamsSchema.from_params(trinoid),
        residuals={"solve.residual[t=0x0.0p+0]": 0.0},
        provenance=Provenance(noidkit="0.1.0", python="3.11", numpy="1.26.2", scipy="1.11.4"),
    )


@pytest.fixture
def surface():
    """Two-triangle surface with one failed vertex."""
    return SurfaceMesh(
        z=np.array([0, 1, 1j, 1 + 1j]),
        vertices=np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [np.nan, np.nan, np.nan]]),
        normals=np.array([[0, 0, 1], [0, 0, 1], [0, 0, 1], [np.nan, np.nan, np.nan]]),
        faces=np.array([[0, 1, 2]]),
        region=np.full(4, -1),
        iwasawa_residual=np.array([1e-12, 2e-12, 3e-12, np.nan]),
        tail_mass=np.zeros(4),
        mean_curvature=np.array([0.5, 0.5, 0.5, np.nan]),
        leak=np.zeros(4),
        status=["ok", "ok", "ok", "failed"],
    )


class TestArtifactRepo:
    """Tests for artifact persistence."""

    def test_save_and_load(self, tmp_path, artifact, trinoid):
        """Test the artifact reloads with exact parameters."""
        repo = ArtifactRepo(tmp_path)

        path = repo.save_artifact(artifact)
        loaded = repo.load_artifact()

        assert path == tmp_path / "artifact.json"
        assert repo.exists()
        assert np.array_equal(loaded.initial_params().coefficient_array(), trinoid.coefficient_array())
        assert loaded.residuals == artifact.residuals

    def test_load_from_directory(self, tmp_path, artifact):
        """Test a directory path resolves to its artifact.json."""
        ArtifactRepo(tmp_path).save_artifact(artifact)

        loaded = ArtifactRepo(tmp_path / "elsewhere").load_artifact(tmp_path)

        assert loaded.config.truncation == artifact.config.truncation

    def test_no_temporary_left(self, tmp_path, artifact):
        """Test writes leave only the final file."""
        ArtifactRepo(tmp_path).save_artifact(artifact)

        assert sorted(p.name for p in tmp_path.iterdir()) == ["artifact.json"]

    def test_missing_artifact(self, tmp_path):
        """Test a missing artifact raises ArtifactError with its path."""
        with pytest.raises(ArtifactError) as exc_info:
            ArtifactRepo(tmp_path).load_artifact()

        assert exc_info.value.exit_code == 3
        assert exc_info.value.path == str(tmp_path / "artifact.json")

    def test_corrupt_artifact(self, tmp_path):
        """Test a malformed artifact raises ArtifactError."""
        (tmp_path / "artifact.json").write_text("{not json", encoding="utf-8")

        with pytest.raises(ArtifactError):
            ArtifactRepo(tmp_path).load_artifact()

    def test_reports(self, tmp_path):
        """Test reports persist under their own name."""
        repo = ArtifactRepo(tmp_path)
        report = ValidationReport(checks=[Check.measure("period.real_part", 1e-12, 1e-9)])

        repo.save_report(report, "validation.json")
        loaded = repo.load_report("validation.json", ValidationReport)

        assert loaded.passed
        assert loaded.checks[0].name == "period.real_part"


class TestLoadConfig:
    """Tests for config files."""

    def test_valid_config(self, tmp_path):
        """Test a JSON config parses."""
        path = tmp_path / "run.json"
        path.write_text('{"family": "delaunay", "t": [0.01, 0.02], "truncation": 8}', encoding="utf-8")

        config = load_config(path)

        assert config.t == [0.01, 0.02]
        assert config.truncation == 8

    def test_invalid_config(self, tmp_path):
        """Test schema violations surface as ValidationError."""
        path = tmp_path / "run.json"
        path.write_text('{"truncation": 0}', encoding="utf-8")

        with pytest.raises(ValidationError):
            load_config(path)

    def test_missing_config(self, tmp_path):
        """Test a missing config is an ArtifactError."""
        with pytest.raises(ArtifactError):
            load_config(tmp_path / "absent.json")


class TestMeshRepo:
    """Tests for OBJ and TSV output."""

    def test_diagnostics(self, tmp_path, surface):
        """Test one TSV row per z-sample with nan for missing values."""
        repo = MeshRepo(tmp_path)

        repo.save_mesh(surface, "mesh_t0")
        rows = repo.load_diagnostics("mesh_t0")

        assert len(rows) == 4
        assert tuple(rows[0].keys()) == DIAGNOSTIC_COLUMNS
        assert rows[3]["status"] == "failed"
        assert rows[3]["mean_curvature"] == "nan"
        assert float(rows[1]["z_re"]) == 1.0

    def test_obj(self, tmp_path, surface):
        """Test the OBJ keeps every vertex and face."""
        repo = MeshRepo(tmp_path)

        obj_path, _ = repo.save_mesh(surface, "mesh_t0")
        mesh = repo.load_mesh("mesh_t0")

        assert obj_path.is_file()
        assert mesh.points.shape[0] == 4
        assert mesh.cells[0].data.shape == (1, 3)

    def test_missing_diagnostics(self, tmp_path):
        """Test a missing TSV raises ArtifactError."""
        with pytest.raises(ArtifactError):
            MeshRepo(tmp_path).load_diagnostics("absent")
