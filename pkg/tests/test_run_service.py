from unittest.mock import Mock

import numpy as np
import pytest

from noidkit.core.weierstrass import NoidParams
from noidkit.errors import InvalidInputError
from noidkit.schemas.run import ParamsSchema, Provenance, RunArtifact, RunConfig
from noidkit.services.run_service import VALIDATION_NAME, VERIFICATION_NAME, RunService


@pytest.fixture
def mock_repo():
    """Create a mock ArtifactRepo."""
    return Mock()


@pytest.fixture
def mock_mesh_repo():
    """Create a mock MeshRepo."""
    return Mock()


@pytest.fixture
def run_service(mock_repo, mock_mesh_repo, settings):
    """Create RunService with mocked repos."""
    return RunService(mock_repo, mock_mesh_repo, settings)


@pytest.fixture
def delaunay_config():
    return RunConfig(family="delaunay", t=[0.01, -0.01], truncation=16)


class TestRunServiceValidate:
    """Tests for validation runs."""

    def test_delaunay_validation(self, run_service, mock_repo, delaunay_config):
        """Test every t gets an (r, s) check and the report is saved."""
        report = run_service.validate(delaunay_config)

        assert report.passed
        assert len(report.checks) == 2
        mock_repo.save_report.assert_called_once_with(report, VALIDATION_NAME)

    def test_delaunay_without_real_solution(self, run_service):
        """Test rs > 1/16 becomes a failed check, not an exception."""
        report = run_service.validate(RunConfig(family="delaunay", t=[0.01, 0.07]))

        assert not report.passed
        assert "NoRealSolutionError" in report.failures[0].detail

    def test_degenerate_params(self, run_service):
        """Test coinciding ends fail the invariant check."""
        x = NoidParams.constant([1, 0, 0], [0, 0, 1], [1, 1, -1], truncation=2)
        config = RunConfig(family="nnoid", params=ParamsSchema.from_params(x), truncation=2)

        report = run_service.validate(config)

        assert [c.name for c in report.failures] == ["invariants"]

    @pytest.mark.slow
    def test_jorge_meeks_validation(self, run_service):
        """Test the builtin trinoid passes validation."""
        report = run_service.validate(RunConfig(truncation=2))

        assert report.passed, report.to_text()


class TestRunServiceSolve:
    """Tests for solve runs."""

    def test_delaunay_solve(self, run_service, mock_repo, delaunay_config):
        """Test the Delaunay artifact stores monodromy residuals per t."""
        artifact = run_service.solve(delaunay_config)

        assert artifact.basepoint == 1
        assert artifact.residuals["delaunay.closed_form[t=0.01]"] < 1e-9
        assert artifact.residuals["delaunay.value_at_one[t=-0.01]"] < 1e-9
        mock_repo.save_artifact.assert_called_once_with(artifact)

    def test_baseline_solve(self, run_service, mock_repo):
        """Test a t = 0 run records the central parameters."""
        artifact = run_service.solve(RunConfig(t=[0.0], truncation=2))

        assert len(artifact.path) == 1
        assert artifact.path[0].t == 0.0
        assert not artifact.heuristic_basepoint
        mock_repo.save_artifact.assert_called_with(artifact)

    def test_delaunay_solve_is_repeatable(self, run_service, delaunay_config):
        """Test two runs of the same config give byte-identical artifacts."""
        first = run_service.solve(delaunay_config)
        second = run_service.solve(delaunay_config)

        assert first.model_dump_json() == second.model_dump_json()

    @pytest.mark.slow
    def test_resume_matches_uninterrupted(self, run_service):
        """Test a resumed ladder reproduces the uninterrupted solution path."""
        config = RunConfig(t=[1e-4, 2e-4], truncation=2, workers=1)
        full = run_service.solve(config)
        again = run_service.solve(config)
        partial = full.model_copy(update={"path": [p for p in full.path if p.t < 1.5e-4]})

        resumed = run_service.solve(config, resume=partial)

        assert full.model_dump_json() == again.model_dump_json()
        assert [p.t for p in resumed.path] == [p.t for p in full.path]
        for ours, theirs in zip(resumed.path, full.path):
            x_resumed = ours.x.to_params(2, config.rho).coefficient_array()
            x_full = theirs.x.to_params(2, config.rho).coefficient_array()
            assert np.max(np.abs(x_resumed - x_full)) <= 1e-12

    def test_provenance_without_timestamps(self, run_service):
        """Test timestamps stay empty unless requested."""
        provenance = run_service.provenance(RunConfig())

        assert provenance.created_at is None
        assert provenance.noidkit


class TestRunServiceVerify:
    """Tests for verification runs."""

    def test_delaunay_verify(self, run_service, mock_repo, delaunay_config):
        """Test the Delaunay checks pass without geometry."""
        artifact = run_service.solve(delaunay_config)

        report = run_service.verify(artifact, geometry=False)

        assert report.passed, report.to_text()
        names = [c.name for c in report.checks]
        assert "catenoid.flux" in names
        assert "delaunay.derivative_at_one[t=-0.01]" in names
        mock_repo.save_report.assert_called_with(report, VERIFICATION_NAME)

    def test_baseline_verify(self, run_service):
        """Test the t = 0 immersion is a point and the residual vanishes."""
        artifact = run_service.solve(RunConfig(t=[0.0], truncation=2))

        report = run_service.verify(artifact)

        assert report.passed, report.to_text()

    def test_missing_points_fail(self, run_service, trinoid):
        """Test t values without solved points are reported."""
        artifact = RunArtifact(
            config=RunConfig(t=[1e-3], truncation=trinoid.truncation),
            x0=ParamsSchema.from_params(trinoid),
            provenance=Provenance(noidkit="0.1.0", python="3.11", numpy="1.26.2", scipy="1.11.4"),
        )

        report = run_service.verify(artifact, geometry=False)

        assert "solve[t=0.001]" in [c.name for c in report.failures]


class TestRunServiceMesh:
    """Tests for mesh runs."""

    def test_unsolved_t_refused(self, run_service, trinoid):
        """Test meshing needs a solved point."""
        artifact = RunArtifact(
            config=RunConfig(t=[1e-3], truncation=trinoid.truncation),
            x0=ParamsSchema.from_params(trinoid),
            provenance=Provenance(noidkit="0.1.0", python="3.11", numpy="1.26.2", scipy="1.11.4"),
        )

        with pytest.raises(InvalidInputError):
            run_service.mesh(artifact, 1e-3)

    def test_delaunay_mesh(self, run_service, mock_mesh_repo, delaunay_config):
        """Test the Delaunay annulus is immersed and handed to the mesh repo."""
        mock_mesh_repo.save_mesh.return_value = ("mesh.obj", "mesh.tsv")
        config = delaunay_config.model_copy(update={"truncation": 8})
        config.grid.sectors = 6
        config.grid.ratio = 2.0
        artifact = run_service.solve(config)

        obj_path, tsv_path, surface = run_service.mesh(artifact, 0.01)

        assert obj_path == "mesh.obj"
        assert surface.ok.all()
        mock_mesh_repo.save_mesh.assert_called_once()
