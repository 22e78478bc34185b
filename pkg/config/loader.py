# config/loader.py
"""
Experiment config loading.

A config file is nested JSON; command-line overrides use dot paths
(`--set train.lr=0.005`). Every problem found is collected and raised
together so a bad config fails once with the full list.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import structlog
from pydantic import ValidationError

from config.models import ExperimentConfig

log = structlog.get_logger(__name__)


class ConfigError(ValueError):
    """Invalid config file, override, or value."""


def _parse_value(raw: str) -> Any:
    """JSON when it parses (numbers, bools, null, objects), plain string otherwise."""
    txt = raw.strip()
    try:
        return json.loads(txt)
    except json.JSONDecodeError:
        return txt


def parse_override(item: str) -> tuple[List[str], Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r}: expected key.path=value")
    key, raw = item.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError(f"override {item!r}: empty key path")
    return path, _parse_value(raw)


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Return a copy of `data` with each dot-path override written in."""
    out = json.loads(json.dumps(data))
    errors: List[str] = []
    for item in overrides:
        try:
            path, value = parse_override(item)
        except ConfigError as e:
            errors.append(str(e))
            continue
        node = out
        for part in path[:-1]:
            child = node.get(part)
            if child is None:
                child = {}
                node[part] = child
            if not isinstance(child, dict):
                errors.append(f"{'.'.join(path)}: {part!r} is not a section")
                break
            node = child
        else:
            node[path[-1]] = value
    if errors:
        raise ConfigError("Invalid overrides:\n  - " + "\n  - ".join(errors))
    return out


def _format_validation(err: ValidationError) -> List[str]:
    lines = []
    for e in err.errors():
        where = ".".join(str(p) for p in e.get("loc", ())) or "<root>"
        lines.append(f"{where}: {e.get('msg', 'invalid')}")
    return lines


def build_config(data: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        msg = "Invalid config:\n  - " + "\n  - ".join(_format_validation(e))
        log.error("config rejected", problems=len(e.errors()))
        raise ConfigError(msg) from e


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Iterable[str] = (),
) -> ExperimentConfig:
    """
    Read the JSON config at `path` (defaults only when None), apply overrides,
    validate. Raises ConfigError on any problem.
    """
    data: Dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{p}: line {e.lineno}: {e.msg}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: top level must be an object")
    data = apply_overrides(data, overrides)
    return build_config(data)


def dump_config(cfg: ExperimentConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(
        json.dumps(cfg.model_dump(mode="json", by_alias=True), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
