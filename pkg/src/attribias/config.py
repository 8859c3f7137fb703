"""Run configuration: a YAML (or JSON) tree validated against config_schema.json.

Relative paths resolve against the config file's directory.
"""
from __future__ import annotations

import copy
import functools
import json
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import jsonschema
import yaml

from .context import ConfigError


@functools.lru_cache(maxsize=1)
def _validator():
    sch = schema()
    cls = jsonschema.validators.validator_for(sch)
    cls.check_schema(sch)
    return cls(sch)


def schema() -> dict:
    return json.loads(resources.files("attribias").joinpath("config_schema.json").read_text(encoding="utf-8"))


def _fill_defaults(node: dict, sch: dict) -> None:
    for key, sub in sch.get("properties", {}).items():
        if key not in node and "default" in sub:
            node[key] = copy.deepcopy(sub["default"])
        if sub.get("type") == "object":
            node.setdefault(key, {})
            _fill_defaults(node[key], sub)


_PATH_KEYS = [("benchmark", "queries"), ("benchmark", "collection"), ("benchmark", "qrels"),
              ("output_dir",), ("retrieval", "run_file"), ("name_pool",), ("templates",),
              ("audit", "verdicts")]


def normalize(raw: Dict[str, Any], base_dir: Optional[Path] = None) -> Dict[str, Any]:
    """Validate, fill defaults, resolve paths; raises ConfigError."""
    cfg = copy.deepcopy(raw)
    validator = _validator()
    err = jsonschema.exceptions.best_match(validator.iter_errors(cfg))
    if err is not None:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {err.message}")
    _fill_defaults(cfg, validator.schema)
    if base_dir is not None:
        for keys in _PATH_KEYS:
            node = cfg
            for k in keys[:-1]:
                node = node.get(k, {})
            val = node.get(keys[-1])
            if isinstance(val, str) and not Path(val).is_absolute():
                node[keys[-1]] = str((base_dir / val).resolve())
    if cfg["retrieval"]["method"] == "run_file" and not cfg["retrieval"].get("run_file"):
        raise ConfigError("retrieval.method=run_file needs retrieval.run_file")
    if cfg["gateway"]["kind"] == "http" and not cfg["gateway"].get("http"):
        raise ConfigError("gateway.kind=http needs a gateway.http section")
    cond = cfg["conditions"]
    if not cond["modes"] and not cond["mixed"]:
        raise ConfigError("no conditions to run")
    return cfg


def load_config(path, overrides: Iterable[str] = ()) -> Dict[str, Any]:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not valid YAML/JSON: {e}") from None
    for item in overrides:
        apply_override(raw, item)
    return normalize(raw, path.parent)


def apply_override(cfg: dict, item: str) -> None:
    """Set ``a.b.c=value``; the value is parsed as YAML."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, value = item.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {item!r}: {p} is not a section")
    node[parts[-1]] = yaml.safe_load(value)
