from functools import lru_cache
from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Numerical and runtime configuration."""

    project_name: str = "noidkit"
    debug: bool = Field(default=False)
    log_config: Optional[Path] = Field(default=Path("logging.ini"))
    output_dir: Path = Field(default=Path("runs"))
    workers: int = Field(default=1, ge=1)

    # loop algebra
    truncation: int = Field(default=32, ge=1)
    rho: float = Field(default=2.0, gt=1.0)
    log_radius: float = Field(default=0.5, gt=0.0)
    det_tol: float = Field(default=1e-9, gt=0.0)
    unitary_tol: float = Field(default=1e-9, gt=0.0)

    # iwasawa
    iwasawa_tol: float = Field(default=1e-10, gt=0.0)
    iwasawa_max_iter: int = Field(default=50, ge=1)  # Wilson (Newton) sweeps

    # weierstrass
    quad_tol: float = Field(default=1e-11, gt=0.0)
    quad_min_nodes: int = Field(default=64, ge=8)
    quad_max_nodes: int = Field(default=4096, ge=8)
    fd_step: float = Field(default=1e-6, gt=0.0)
    rank_tol: float = Field(default=1e-8, gt=0.0)

    # potential / transport
    singular_tol: float = Field(default=1e-8, gt=0.0)
    path_clearance: float = Field(default=1e-6, gt=0.0)
    ode_tol: float = Field(default=1e-11, gt=0.0)
    structure_tol: float = Field(default=1e-9, gt=0.0)
    transport_det_tol: float = Field(default=1e-10, gt=0.0)

    # solver
    solver_tol: float = Field(default=1e-9, gt=0.0)
    newton_max_iter: int = Field(default=12, ge=1)
    initial_step: float = Field(default=1e-4, gt=0.0)
    min_step: float = Field(default=1e-7, gt=0.0)

    # immersion
    well_def_tol: float = Field(default=1e-7, gt=0.0)
    mesh_ratio: float = Field(default=1.2, gt=1.0)

    class Config:
        env_prefix = "NOIDKIT_"
        env_file = ".env"
        case_sensitive = False


@lru_cache()
def get_settings() -> Settings:
    """Get cached application settings."""
    return Settings()
