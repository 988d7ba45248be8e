import numpy as np
import pytest
from pydantic import ValidationError

from noidkit.core.loop_algebra import LaurentLoop
from noidkit.schemas.report import Check, ValidationReport
from noidkit.schemas.run import (
    Family,
    LoopSchema,
    ParamsSchema,
    Provenance,
    RunArtifact,
    RunConfig,
)


def make_provenance():
    return Provenance(noidkit="0.1.0", python="3.11", numpy="1.26.2", scipy="1.11.4")


class TestRunConfig:
    """Tests for run configuration validation."""

    def test_defaults(self):
        """Test the default run is a Jorge-Meeks trinoid ladder."""
        config = RunConfig()

        assert config.family == Family.jorge_meeks
        assert config.n == 3
        assert not config.baseline

    def test_nnoid_needs_params(self):
        """Test explicit families require parameters."""
        with pytest.raises(ValidationError):
            RunConfig(family="nnoid")

    def test_mixed_baseline_rejected(self):
        """Test t = 0 may not be mixed into a ladder."""
        with pytest.raises(ValidationError):
            RunConfig(t=[0.0, 1e-3])

    def test_empty_ladder_rejected(self):
        """Test the ladder is not empty."""
        with pytest.raises(ValidationError):
            RunConfig(t=[])

    def test_baseline(self):
        """Test a ladder of zeros is a baseline run."""
        assert RunConfig(t=[0.0]).baseline

    def test_unknown_field_rejected(self):
        """Test typos in config files are reported."""
        with pytest.raises(ValidationError):
            RunConfig.model_validate({"truncaton": 8})

    def test_schema_version(self):
        """Test unknown schema versions are refused."""
        with pytest.raises(ValidationError):
            RunConfig(schema_version=2)

    def test_to_settings(self, settings):
        """Test run overrides land in the settings copy."""
        config = RunConfig(truncation=8, rho=3.0, workers=2)

        derived = config.to_settings(settings)

        assert derived.truncation == 8
        assert derived.rho == 3.0
        assert derived.workers == 2
        assert settings.truncation == 4

    def test_params_set_n(self, trinoid):
        """Test explicit parameters determine n."""
        config = RunConfig(family="nnoid", params=ParamsSchema.from_params(trinoid), n=5)

        assert config.n == 3


class TestHexFloats:
    """Tests for exact float storage."""

    def test_numbers_become_hex(self):
        """Test plain numbers are stored as hexfloat text."""
        schema = LoopSchema(coefficients=[(0, 0.1, -2)])

        index, re, im = schema.coefficients[0]
        assert re == (0.1).hex()
        assert float.fromhex(im) == -2.0

    def test_hex_text_kept(self):
        """Test hexfloat input is normalized, not reparsed as decimal."""
        schema = LoopSchema(coefficients=[(1, "0x1.999999999999ap-4", "0x0p+0")])

        assert float.fromhex(schema.coefficients[0][1]) == 0.1

    def test_params_are_exact(self, trinoid):
        """Test parameters survive JSON bit for bit."""
        text = ParamsSchema.from_params(trinoid).model_dump_json()

        restored = ParamsSchema.model_validate_json(text).to_params(trinoid.truncation, trinoid.rho)

        assert np.array_equal(restored.coefficient_array(), trinoid.coefficient_array())
        assert restored.frozen == trinoid.frozen

    def test_loop_schema(self):
        """Test a Laurent loop keeps its indices."""
        loop = LaurentLoop.from_terms({-1: 0.5j, 2: 1.25}, truncation=3)

        back = LoopSchema.from_loop(loop).to_loop(3, 2.0)

        assert back.allclose(loop, 0.0)

    def test_params_length_mismatch(self):
        """Test a, b and p need one entry per end."""
        one = LoopSchema.from_value(1.0)

        with pytest.raises(ValidationError):
            ParamsSchema(a=[one] * 3, b=[one] * 2, p=[one] * 3)

    def test_too_few_ends(self):
        """Test fewer than three ends are refused."""
        one = LoopSchema.from_value(1.0)

        with pytest.raises(ValidationError):
            ParamsSchema(a=[one] * 2, b=[one] * 2, p=[one] * 2)


class TestRunArtifact:
    """Tests for the artifact model."""

    def test_basepoint(self):
        """Test the basepoint is stored exactly."""
        artifact = RunArtifact(config=RunConfig(), z0=(0.1, -0.25), provenance=make_provenance())

        assert artifact.basepoint == complex(0.1, -0.25)

    def test_no_params(self):
        """Test artifacts without parameters refuse initial_params."""
        artifact = RunArtifact(config=RunConfig(family="delaunay"), provenance=make_provenance())

        with pytest.raises(ValueError):
            artifact.initial_params()

    def test_point_lookup(self):
        """Test point_at on an empty path."""
        artifact = RunArtifact(config=RunConfig(), provenance=make_provenance())

        assert artifact.point_at(1e-4) is None
        assert artifact.solution_path().points == []


class TestReports:
    """Tests for itemized reports."""

    def test_measure(self):
        """Test checks pass at or under the tolerance."""
        assert Check.measure("a", 1e-10, 1e-9).passed
        assert not Check.measure("b", 1e-8, 1e-9).passed

    def test_nan_fails(self):
        """Test non-finite measurements fail and are stored as null."""
        check = Check.measure("c", float("nan"), 1.0)

        assert not check.passed
        assert check.measured is None

    def test_report_text(self):
        """Test the text rendering lists every check and note."""
        report = ValidationReport()
        report.add(Check.measure("period.real_part", 1e-12, 1e-9))
        report.add(Check.failure("nondegeneracy.rank", "rank 5 < 6"))
        report.notes["basepoint"] = "0"

        text = report.to_text()

        assert not report.passed
        assert [c.name for c in report.failures] == ["nondegeneracy.rank"]
        assert "[PASS] period.real_part" in text
        assert "[FAIL] nondegeneracy.rank: n/a" in text
        assert "basepoint: 0" in text
