import argparse
import json

import pytest

from noidkit.commands.run import build_config, handle_errors, parse_ladder
from noidkit.errors import ArtifactError, ConvergenceError, InvalidInputError
from noidkit.main import build_parser, main


@pytest.fixture
def delaunay_config_file(tmp_path):
    """Delaunay run config on disk."""
    path = tmp_path / "delaunay.json"
    path.write_text(json.dumps({"family": "delaunay", "t": [0.01], "truncation": 16}), encoding="utf-8")
    return path


class TestParser:
    """Tests for the command line surface."""

    def test_parse_ladder(self):
        """Test comma separated ladders."""
        assert parse_ladder("1e-4,2e-4,-1e-4") == [1e-4, 2e-4, -1e-4]

    def test_parse_ladder_rejects_text(self):
        """Test non-numeric ladders are refused."""
        with pytest.raises(argparse.ArgumentTypeError):
            parse_ladder("small,large")

    def test_subcommand_required(self):
        """Test a subcommand must be given."""
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_flags_override_config(self, delaunay_config_file, tmp_path):
        """Test flags win over the config file."""
        args = build_parser().parse_args([
            "solve", "--config", str(delaunay_config_file), "--t", "0.02,0.03", "--truncation", "8",
            "--out", str(tmp_path / "run"),
        ])

        config = build_config(args)

        assert config.t == [0.02, 0.03]
        assert config.truncation == 8
        assert config.output_dir == tmp_path / "run"
        assert config.family.value == "delaunay"

    def test_mesh_has_no_numeric_flags(self):
        """Test mesh and verify read their numerics from the artifact."""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["mesh", "--truncation", "8"])


class TestHandleErrors:
    """Tests for exit codes."""

    @pytest.mark.parametrize(
        "error, code",
        [
            (InvalidInputError("bad input"), 1),
            (ConvergenceError("no convergence", residual=1.0), 2),
            (ArtifactError("cannot read", path="x"), 3),
            (OSError("disk full"), 3),
        ],
    )
    def test_exit_codes(self, error, code):
        """Test each error family maps to its exit code."""
        @handle_errors
        def command(args):
            raise error

        assert command(argparse.Namespace()) == code

    def test_success_passes_through(self):
        """Test the command's own return value is kept."""
        @handle_errors
        def command(args):
            return 0

        assert command(argparse.Namespace()) == 0


class TestMain:
    """Tests for end-to-end command runs."""

    def test_validate_delaunay(self, delaunay_config_file, tmp_path, capsys):
        """Test validate prints the report and writes validation.json."""
        out = tmp_path / "run"

        code = main(["validate", "--config", str(delaunay_config_file), "--out", str(out)])

        assert code == 0
        assert (out / "validation.json").is_file()
        assert "[PASS] delaunay.rs[t=0.01]" in capsys.readouterr().out

    def test_validate_failure_exit_code(self, delaunay_config_file, tmp_path):
        """Test a failed check exits with 1."""
        code = main(["validate", "--config", str(delaunay_config_file), "--t", "0.07", "--out", str(tmp_path)])

        assert code == 1

    def test_invalid_config_exit_code(self, tmp_path):
        """Test schema violations exit with 1."""
        path = tmp_path / "bad.json"
        path.write_text('{"truncation": -1}', encoding="utf-8")

        assert main(["validate", "--config", str(path), "--out", str(tmp_path)]) == 1

    def test_verify_without_artifact(self, tmp_path):
        """Test a missing artifact exits with 3."""
        assert main(["verify", "--out", str(tmp_path / "absent")]) == 3

    def test_solve_then_verify(self, delaunay_config_file, tmp_path):
        """Test a Delaunay run solves and verifies from its artifact."""
        out = tmp_path / "run"

        assert main(["solve", "--config", str(delaunay_config_file), "--out", str(out)]) == 0
        assert (out / "artifact.json").is_file()
        assert main(["verify", "--artifact", str(out / "artifact.json"), "--no-geometry"]) == 0
        assert (out / "verification.json").is_file()
