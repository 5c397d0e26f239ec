"""
Config files, recipes and config hashing.

A config file is YAML with flat top-level keys, optional per-model sections
(``static:``, ``semi_dynamic:``, ``fully_dynamic:``, ``capacity:``) and an
optional ``sweep:`` section. Values resolve in the order top-level keys,
then the section of the selected model, then command-line overrides.
"""

import hashlib
import json
import re
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import yaml
from pydantic import ValidationError

from .errors import ConfigError
from .models import ModelKind, SimConfig, SweepSpec

MODEL_SECTIONS = tuple(kind.value for kind in ModelKind)
SWEEP_SECTION = "sweep"

FIELD_IN_MESSAGE = re.compile(r"Value error, (\w+) (?:is required|must)")

# short names accepted in files and on the command line
KEY_ALIASES = {
    "reps": "replications",
    "beta": "beta_override",
    "l0": "ell0_override",
    "ell0": "ell0_override",
}


def _normalize(values: Mapping[str, Any]) -> Dict[str, Any]:
    return {KEY_ALIASES.get(key, key): value for key, value in values.items()}


def _validation_message(exc: ValidationError) -> Tuple[str, Optional[str]]:
    error = exc.errors()[0]
    field = ".".join(str(part) for part in error["loc"]) or None
    message = error["msg"]
    if field is None:
        # model-level checks name their field first
        match = FIELD_IN_MESSAGE.search(message)
        field = match.group(1) if match else None
    return (f"{field}: {message}" if field else message), field


def list_recipes() -> List[str]:
    """Names of the bundled recipes."""
    folder = resources.files("spatial_match") / "recipes"
    return sorted(entry.name[:-5] for entry in folder.iterdir() if entry.name.endswith(".yaml"))


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Read a YAML config file, or a bundled recipe when ``path`` names one.

    Raises:
        ConfigError: If the file is missing, unparsable or not a mapping
    """
    if not Path(path).exists() and path in list_recipes():
        text = (resources.files("spatial_match") / "recipes" / f"{path}.yaml").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}", field="config")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}", field="config")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping, got {type(data).__name__}", field="config")
    return data


def resolve_config(
    raw: Mapping[str, Any],
    overrides: Optional[Mapping[str, Any]] = None
) -> Tuple[SimConfig, Optional[SweepSpec]]:
    """
    Resolve a parsed config file and overrides into a SimConfig.

    None-valued overrides are ignored.

    Returns:
        ``(config, sweep)``; sweep is None when the file has no sweep section

    Raises:
        ConfigError: On unknown keys or invalid values, naming the field
    """
    overrides = _normalize({k: v for k, v in (overrides or {}).items() if v is not None})
    top = _normalize({k: v for k, v in raw.items() if k not in MODEL_SECTIONS and k != SWEEP_SECTION})
    model = overrides.get("model", top.get("model"))
    if model is None:
        raise ConfigError("model is required", field="model")
    if isinstance(model, ModelKind):
        model = model.value
    if model not in MODEL_SECTIONS:
        raise ConfigError(f"unknown model {model!r}; choose from {list(MODEL_SECTIONS)}", field="model")
    section = raw.get(model) or {}
    if not isinstance(section, dict):
        raise ConfigError(f"section {model} must be a mapping", field=model)

    merged = {**top, **_normalize(section), **overrides}
    unknown = sorted(set(merged) - set(SimConfig.model_fields))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}", field=unknown[0])
    try:
        cfg = SimConfig.model_validate(merged)
    except ValidationError as exc:
        message, field = _validation_message(exc)
        raise ConfigError(message, field=field)

    sweep = None
    if raw.get(SWEEP_SECTION) is not None:
        try:
            sweep = SweepSpec.model_validate(raw[SWEEP_SECTION])
        except ValidationError as exc:
            message, field = _validation_message(exc)
            raise ConfigError(f"sweep.{message}", field=field)
    return cfg, sweep


def config_hash(cfg: SimConfig, extra: Optional[Mapping[str, Any]] = None) -> str:
    """sha256 of the canonical JSON of the resolved configuration (and any extra settings)."""
    document = {"config": cfg.model_dump(mode="json")}
    if extra:
        document["extra"] = dict(extra)
    text = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def config_from_manifest(manifest: Mapping[str, Any]) -> Tuple[SimConfig, Optional[SweepSpec]]:
    """
    Rebuild the resolved config and sweep section recorded in a manifest.json.

    Raises:
        ConfigError: If the recorded config or sweep no longer validates
    """
    raw: Dict[str, Any] = dict(manifest.get("config") or {})
    if manifest.get("sweep") is not None:
        raw[SWEEP_SECTION] = manifest["sweep"]
    return resolve_config(raw)


SUMMARY_SCHEMA_FILE = "summary.v1.json"


def load_summary_schema() -> Dict[str, Any]:
    """The committed JSON schema of summary.json."""
    text = (resources.files("spatial_match") / "schema" / SUMMARY_SCHEMA_FILE).read_text()
    return json.loads(text)


def schema_shape(schema: Mapping[str, Any]) -> Dict[str, Tuple[Tuple[str, ...], Tuple[str, ...]]]:
    """
    Reduce a JSON schema to the property names and required fields of each object.

    Titles, descriptions and how a given pydantic release spells constants are
    left out, so two schemas with the same shape describe the same documents.
    """
    objects = {"": schema, **schema.get("$defs", {})}
    return {
        name: (tuple(sorted(body.get("properties", {}))), tuple(sorted(body.get("required", []))))
        for name, body in objects.items()
        if body.get("type") == "object"
    }
