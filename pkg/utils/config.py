"""
Configuration Loading
`key = value` config files and named presets for ModelConfig / TrainConfig
"""

import logging
import typing
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from core.model_config import ModelConfig
from presets.model_configs import model_preset, train_preset
from training.trainer import TrainConfig
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

PRESET_PREFIX = "preset:"
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig


def _convert(raw: str, hint: Any) -> Any:
    """Convert a config string according to a dataclass type hint"""
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union and type(None) in args:
        if raw.lower() in ("none", ""):
            return None
        return _convert(raw, next(a for a in args if a is not type(None)))
    if origin in (list, typing.List):
        return [_convert(part.strip(), args[0]) for part in raw.split(",") if part.strip()]
    if hint is bool:
        lowered = raw.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if hint is int:
        return int(raw)
    if hint is float:
        return float(raw)
    return raw


def _field_hints() -> Dict[str, Tuple[str, Any]]:
    hints = {}
    for target, cls in (("model", ModelConfig), ("train", TrainConfig)):
        resolved = typing.get_type_hints(cls)
        for f in fields(cls):
            hints[f.name] = (target, resolved[f.name])
    return hints


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    """
    Parse `key = value` lines. `#` starts a comment; list values are comma-separated.
    A `preset = <name>` line (anywhere) selects the base values that the other keys
    override.

    Raises:
        ConfigError: malformed line, unknown key or unconvertible value, naming the line
    """
    hints = _field_hints()
    preset = None
    values: Dict[str, Dict[str, Any]] = {"model": {}, "train": {}}
    for lineno, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {content!r}")
        key, raw = (part.strip() for part in content.split("=", 1))
        if key == "preset":
            preset = raw
            continue
        if key not in hints:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        target, hint = hints[key]
        try:
            values[target][key] = _convert(raw, hint)
        except ValueError as e:
            raise ConfigError(f"{source}:{lineno}: bad value for '{key}': {e}")

    model = model_preset(preset) if preset else ModelConfig()
    train_values = train_preset(preset) if preset else {}
    for key, value in values["model"].items():
        setattr(model, key, value)
    train_values.update(values["train"])
    run = RunConfig(model=model.validate(), train=TrainConfig(**train_values).validate())
    logger.debug(f"Parsed config from {source}: preset={preset}, overrides={values}")
    return run


def load_config(source: Optional[str] = None) -> RunConfig:
    """
    Resolve `preset:<name>`, a config file path, or None (full-scale defaults).
    """
    if source is None:
        return RunConfig(model=ModelConfig().validate(), train=TrainConfig().validate())
    if source.startswith(PRESET_PREFIX):
        name = source[len(PRESET_PREFIX):]
        return RunConfig(model=model_preset(name).validate(), train=TrainConfig(**train_preset(name)).validate())
    path = Path(source)
    if not path.is_file():
        raise ConfigError(f"config file not found: {source}")
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))
