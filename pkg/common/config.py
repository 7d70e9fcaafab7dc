# config.py
import json
import logging
from pathlib import Path
from typing import Any, Dict

from pydantic import ValidationError as PydanticValidationError

from backend.errors import ConfigurationError
from backend.schemas.experiment import ExperimentConfig

logger = logging.getLogger(__name__)


def _field_path(loc: tuple[Any, ...]) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """Read and validate one JSON experiment config; errors name the offending field."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"[CONFIG] Cannot read {p}: {e}", {"path": str(p)}) from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(
            f"[CONFIG] {p}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}",
            {"path": str(p), "line": e.lineno, "column": e.colno},
        ) from e
    if not isinstance(raw, dict):
        raise ConfigurationError(f"[CONFIG] {p}: top level must be an object", {"path": str(p)})

    try:
        config = ExperimentConfig.model_validate(raw)
    except PydanticValidationError as e:
        first = e.errors()[0]
        field = _field_path(tuple(first.get("loc", ())))
        raise ConfigurationError(
            f"[CONFIG] {p}: field '{field}': {first.get('msg', 'invalid value')}",
            {"path": str(p), "field": field, "errors": len(e.errors())},
        ) from e
    logger.info(f"[CONFIG] loaded {p}: {redacted(config)}")
    return config


def redacted(config: ExperimentConfig) -> Dict[str, Any]:
    """Short summary for the startup log line."""
    params = config.params
    return {
        "table_id": config.table_id,
        "kind": config.kind.value,
        "seed": config.seed,
        "k": params.k_values,
        "N": params.N_values,
        "L": params.L_values,
        "delta": params.delta.rule,
        "mesh": params.mesh.rule,
    }
