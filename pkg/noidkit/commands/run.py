import argparse
import functools
import logging
from pathlib import Path
from typing import Callable, Optional

from pydantic import ValidationError

from noidkit.config import get_settings
from noidkit.errors import NoidKitError
from noidkit.repos.artifact_repo import ArtifactRepo, load_config
from noidkit.repos.mesh_repo import MeshRepo
from noidkit.schemas.run import RunArtifact, RunConfig
from noidkit.services.run_service import RunService

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 3


def handle_errors(command: Callable[[argparse.Namespace], int]) -> Callable[[argparse.Namespace], int]:
    """Translate domain, schema and I/O errors into exit codes."""

    @functools.wraps(command)
    def wrapper(args: argparse.Namespace) -> int:
        try:
            return command(args)
        except NoidKitError as e:
            logger.error("%s", e)
            return e.exit_code
        except ValidationError as e:
            logger.error("invalid configuration: %s", e)
            return EXIT_VALIDATION
        except OSError as e:
            logger.error("%s", e)
            return EXIT_IO

    return wrapper


def parse_ladder(text: str) -> list[float]:
    """Comma separated t values, e.g. "1e-4,2e-4,-1e-4"."""
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}")


def build_config(args: argparse.Namespace) -> RunConfig:
    """Config file (or defaults) with command line flags applied on top."""
    config = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for flag, field in (("t", "t"), ("truncation", "truncation"), ("rho", "rho"), ("workers", "workers"),
                        ("out", "output_dir")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    if not overrides:
        return config
    return RunConfig.model_validate({**config.model_dump(mode="json"), **overrides})


def build_service(output_dir: Path) -> RunService:
    return RunService(ArtifactRepo(output_dir), MeshRepo(output_dir), get_settings())


def _artifact_path(args: argparse.Namespace) -> Path:
    if getattr(args, "artifact", None):
        return Path(args.artifact)
    if getattr(args, "resume", None):
        return Path(args.resume)
    return Path(args.out or get_settings().output_dir)


def _load_artifact(args: argparse.Namespace) -> tuple[RunService, RunArtifact]:
    path = _artifact_path(args)
    artifact = ArtifactRepo(path.parent if path.suffix else path).load_artifact(path)
    output_dir = Path(args.out) if args.out else artifact.config.output_dir
    return build_service(output_dir), artifact


@handle_errors
def cmd_validate(args: argparse.Namespace) -> int:
    """Period test, rank and monodromy-at-zero checks; 1 when any check fails."""
    config = build_config(args)
    report = build_service(config.output_dir).validate(config)
    print(report.to_text())
    return EXIT_OK if report.passed else EXIT_VALIDATION


@handle_errors
def cmd_solve(args: argparse.Namespace) -> int:
    """Continuation over the t-ladder, resuming from a partial artifact when given."""
    config = build_config(args)
    service = build_service(config.output_dir)
    resume: Optional[RunArtifact] = None
    if args.resume:
        resume = service.repo.load_artifact(Path(args.resume))
        logger.info("resuming from %d solved points", len(resume.path))
    artifact = service.solve(config, resume)
    logger.info("artifact written to %s", service.repo.path())
    for key, value in sorted(artifact.residuals.items()):
        print(f"{key}\t{value:.3e}")
    return EXIT_OK


@handle_errors
def cmd_mesh(args: argparse.Namespace) -> int:
    """OBJ mesh and diagnostics table for every requested t."""
    service, artifact = _load_artifact(args)
    ladder = args.t or artifact.config.t
    for t in ladder:
        obj_path, tsv_path, surface = service.mesh(artifact, t)
        failed = len(surface.status) - int(surface.ok.sum())
        print(f"{obj_path}\t{tsv_path}\t{failed} failed vertices")
    return EXIT_OK


@handle_errors
def cmd_verify(args: argparse.Namespace) -> int:
    """Verification report; 1 when any check fails."""
    service, artifact = _load_artifact(args)
    report = service.verify(artifact, geometry=not args.no_geometry)
    print(report.to_text())
    return EXIT_OK if report.passed else EXIT_VALIDATION
