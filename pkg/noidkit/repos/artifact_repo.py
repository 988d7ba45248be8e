import logging
import os
from pathlib import Path
from typing import Optional, Type, TypeVar

from pydantic import BaseModel, ValidationError

from noidkit.errors import ArtifactError
from noidkit.schemas.run import RunArtifact, RunConfig

logger = logging.getLogger(__name__)

ARTIFACT_NAME = "artifact.json"

Model = TypeVar("Model", bound=BaseModel)


class ArtifactRepo:
    """Repository for run artifacts and reports in one output directory."""

    def __init__(self, root: Path):
        """Initialize repository with its output directory."""
        self.root = Path(root)

    def path(self, name: str = ARTIFACT_NAME) -> Path:
        return self.root / name

    def _write(self, path: Path, text: str) -> Path:
        """Write through a temporary file and rename into place."""
        temporary = path.with_name(path.name + ".tmp")
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            temporary.write_text(text, encoding="utf-8")
            os.replace(temporary, path)
        except OSError as exc:
            raise ArtifactError(f"cannot write {path}: {exc}", path=str(path)) from exc
        logger.debug("wrote %s", path)
        return path

    def _read(self, path: Path, model: Type[Model]) -> Model:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ArtifactError(f"cannot read {path}: {exc}", path=str(path)) from exc
        try:
            return model.model_validate_json(text)
        except ValidationError as exc:
            raise ArtifactError(f"{path} is not a valid {model.__name__}: {exc}", path=str(path)) from exc

    def save_artifact(self, artifact: RunArtifact, name: str = ARTIFACT_NAME) -> Path:
        """Persist the artifact; single writer."""
        return self._write(self.path(name), artifact.model_dump_json(indent=2))

    def load_artifact(self, path: Optional[Path] = None) -> RunArtifact:
        """Load an artifact file, or the directory's artifact.json."""
        path = Path(path) if path is not None else self.path()
        if path.is_dir():
            path = path / ARTIFACT_NAME
        return self._read(path, RunArtifact)

    def exists(self, name: str = ARTIFACT_NAME) -> bool:
        return self.path(name).is_file()

    def save_report(self, report: BaseModel, name: str) -> Path:
        return self._write(self.path(name), report.model_dump_json(indent=2))

    def load_report(self, name: str, model: Type[Model]) -> Model:
        return self._read(self.path(name), model)


def load_config(path: Path) -> RunConfig:
    """Parse a JSON run config; schema violations propagate as ValidationError."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ArtifactError(f"cannot read config {path}: {exc}", path=str(path)) from exc
    return RunConfig.model_validate_json(text)
