from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from noidkit.schemas.run import SCHEMA_VERSION


class Check(BaseModel):
    """One measured residual against its tolerance."""
    name: str
    measured: Optional[float] = None
    tolerance: float
    passed: bool
    detail: str = ""

    @classmethod
    def measure(cls, name: str, measured: float, tolerance: float, detail: str = "") -> "Check":
        """Pass when measured <= tolerance; NaN and inf fail and are stored as null."""
        value = float(measured)
        finite = bool(np.isfinite(value))
        return cls(
            name=name,
            measured=value if finite else None,
            tolerance=tolerance,
            passed=finite and value <= tolerance,
            detail=detail,
        )

    @classmethod
    def failure(cls, name: str, detail: str) -> "Check":
        return cls(name=name, measured=None, tolerance=0.0, passed=False, detail=detail)


class Report(BaseModel):
    """Itemized checks of one command."""
    schema_version: int = SCHEMA_VERSION
    kind: str
    checks: List[Check] = Field(default_factory=list)
    notes: Dict[str, str] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[Check]:
        return [check for check in self.checks if not check.passed]

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def to_text(self) -> str:
        lines = [f"{self.kind} report"]
        for check in self.checks:
            status = "PASS" if check.passed else "FAIL"
            measured = "n/a" if check.measured is None else f"{check.measured:.3e}"
            line = f"  [{status}] {check.name}: {measured} (tol {check.tolerance:.1e})"
            if check.detail:
                line += f"  {check.detail}"
            lines.append(line)
        for key, value in self.notes.items():
            lines.append(f"  {key}: {value}")
        return "\n".join(lines)


class ValidationReport(Report):
    kind: str = "validation"


class VerificationReport(Report):
    kind: str = "verification"
    t: List[float] = Field(default_factory=list)
