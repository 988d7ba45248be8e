from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Annotated, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, BeforeValidator, Field, field_validator, model_validator

from noidkit.config import Settings, get_settings
from noidkit.core.loop_algebra import LaurentLoop
from noidkit.core.weierstrass import MOBIUS_FROZEN, NoidParams
from noidkit.services.monodromy_service import SolutionPath, SolutionPoint

SCHEMA_VERSION = 1


def _to_hex(value: Union[str, float, int]) -> str:
    """Accept numbers or float strings; store Python hexfloat text."""
    if isinstance(value, str) and "0x" in value.lower():
        return float.fromhex(value).hex()
    return float(value).hex()


HexFloat = Annotated[str, BeforeValidator(_to_hex)]


class Family(str, Enum):
    """Builtin or explicit parameter families."""
    nnoid = "nnoid"
    jorge_meeks = "jorge_meeks"
    delaunay = "delaunay"


class LoopSchema(BaseModel):
    """Laurent loop as (index, re, im) triples in hexfloat."""
    coefficients: List[Tuple[int, HexFloat, HexFloat]] = Field(default_factory=list)

    @classmethod
    def from_loop(cls, loop: LaurentLoop) -> "LoopSchema":
        n = loop.truncation
        return cls(coefficients=[(k - n, c.real.hex(), c.imag.hex()) for k, c in enumerate(loop.coeffs)])

    @classmethod
    def from_value(cls, value: complex) -> "LoopSchema":
        return cls(coefficients=[(0, complex(value).real.hex(), complex(value).imag.hex())])

    def to_loop(self, truncation: int, rho: float) -> LaurentLoop:
        terms = {index: complex(float.fromhex(re), float.fromhex(im)) for index, re, im in self.coefficients}
        return LaurentLoop.from_terms(terms, truncation, rho)


class ParamsSchema(BaseModel):
    """Parameter vector x = (a, b, p), one loop per end."""
    a: List[LoopSchema]
    b: List[LoopSchema]
    p: List[LoopSchema]
    frozen: Tuple[int, ...] = MOBIUS_FROZEN

    @model_validator(mode="after")
    def check_lengths(self) -> "ParamsSchema":
        if not (len(self.a) == len(self.b) == len(self.p)):
            raise ValueError("a, b and p must have one entry per end")
        if len(self.p) < 3:
            raise ValueError("an n-noid needs at least 3 ends")
        return self

    @property
    def n(self) -> int:
        return len(self.p)

    @classmethod
    def from_params(cls, x: NoidParams) -> "ParamsSchema":
        return cls(
            a=[LoopSchema.from_loop(loop) for loop in x.a],
            b=[LoopSchema.from_loop(loop) for loop in x.b],
            p=[LoopSchema.from_loop(loop) for loop in x.p],
            frozen=x.frozen,
        )

    def to_params(self, truncation: int, rho: float) -> NoidParams:
        return NoidParams(
            n=self.n,
            a=tuple(loop.to_loop(truncation, rho) for loop in self.a),
            b=tuple(loop.to_loop(truncation, rho) for loop in self.b),
            p=tuple(loop.to_loop(truncation, rho) for loop in self.p),
            frozen=self.frozen,
        )


class GridSpec(BaseModel):
    """Parameter-domain mesh and blow-up sample layout."""
    ratio: float = Field(default=1.2, gt=1.0)
    rings: int = Field(default=12, ge=2)
    sectors: int = Field(default=24, ge=3)
    spacing: Optional[float] = Field(default=None, gt=0)
    extent: Optional[float] = Field(default=None, gt=0)
    samples: int = Field(default=200, ge=1)
    seed: int = 0


class RunConfig(BaseModel):
    """One run: input family, t-ladder, truncation and tolerances."""
    schema_version: int = SCHEMA_VERSION
    family: Family = Family.jorge_meeks
    n: int = Field(default=3, ge=3)
    scale: float = Field(default=1.0, gt=0)
    params: Optional[ParamsSchema] = None
    t: List[float] = Field(default_factory=lambda: [1e-4, 2e-4, 4e-4, 1e-3])
    truncation: int = Field(default=16, ge=1)
    rho: float = Field(default=2.0, gt=1.0)
    ode_tol: float = Field(default=1e-11, gt=0)
    solver_tol: float = Field(default=1e-9, gt=0)
    quad_tol: float = Field(default=1e-11, gt=0)
    iwasawa_tol: float = Field(default=1e-10, gt=0)
    grid: GridSpec = Field(default_factory=GridSpec)
    output_dir: Path = Path("runs")
    workers: int = Field(default=1, ge=1)
    record_timestamps: bool = False

    class Config:
        extra = "forbid"

    @field_validator("schema_version")
    @classmethod
    def check_version(cls, value: int) -> int:
        if value != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {value}")
        return value

    @field_validator("t")
    @classmethod
    def check_ladder(cls, values: List[float]) -> List[float]:
        if not values:
            raise ValueError("the t-ladder is empty")
        if any(t == 0 for t in values) and any(t != 0 for t in values):
            raise ValueError("t = 0 is only allowed as a baseline run on its own")
        return values

    @model_validator(mode="after")
    def check_family(self) -> "RunConfig":
        if self.family == Family.nnoid and self.params is None:
            raise ValueError("family 'nnoid' needs explicit params")
        if self.params is not None:
            self.n = self.params.n
        return self

    @property
    def baseline(self) -> bool:
        return all(t == 0 for t in self.t)

    def to_settings(self, base: Optional[Settings] = None) -> Settings:
        """Global settings with this run's overrides applied."""
        base = base or get_settings()
        return base.model_copy(
            update={
                "truncation": self.truncation,
                "rho": self.rho,
                "ode_tol": self.ode_tol,
                "solver_tol": self.solver_tol,
                "quad_tol": self.quad_tol,
                "iwasawa_tol": self.iwasawa_tol,
                "workers": self.workers,
                "output_dir": self.output_dir,
                "mesh_ratio": self.grid.ratio,
            }
        )


class SolutionPointSchema(BaseModel):
    """Solved point (t, x(t)) of the continuation."""
    t: float
    x: ParamsSchema
    residual: float
    iterations: int
    tail_mass: float = 0.0

    @classmethod
    def from_point(cls, point: SolutionPoint) -> "SolutionPointSchema":
        return cls(
            t=point.t,
            x=ParamsSchema.from_params(point.x),
            residual=point.residual,
            iterations=point.iterations,
            tail_mass=point.tail_mass,
        )

    def to_point(self, truncation: int, rho: float) -> SolutionPoint:
        return SolutionPoint(self.t, self.x.to_params(truncation, rho), self.residual, self.iterations,
                             self.tail_mass)


class Provenance(BaseModel):
    """Versions of the numerical stack; timestamps only on request."""
    noidkit: str
    python: str
    numpy: str
    scipy: str
    seed: int = 0
    created_at: Optional[datetime] = None
    updated_at: Optional[datetime] = None


class RunArtifact(BaseModel):
    """Config snapshot, solution path and per-stage residuals of a run."""
    schema_version: int = SCHEMA_VERSION
    config: RunConfig
    x0: Optional[ParamsSchema] = None
    z0: Tuple[HexFloat, HexFloat] = ("0x0.0p+0", "0x0.0p+0")
    heuristic_basepoint: bool = False
    path: List[SolutionPointSchema] = Field(default_factory=list)
    residuals: Dict[str, float] = Field(default_factory=dict)
    provenance: Provenance

    @property
    def basepoint(self) -> complex:
        return complex(float.fromhex(self.z0[0]), float.fromhex(self.z0[1]))

    def solution_path(self) -> SolutionPath:
        cfg = self.config
        return SolutionPath([p.to_point(cfg.truncation, cfg.rho) for p in self.path])

    def initial_params(self) -> NoidParams:
        if self.x0 is None:
            raise ValueError("artifact has no n-noid parameters")
        return self.x0.to_params(self.config.truncation, self.config.rho)

    def point_at(self, t: float) -> Optional[SolutionPointSchema]:
        for point in self.path:
            if abs(point.t - t) <= 1e-15 * max(1.0, abs(t)):
                return point
        return None
