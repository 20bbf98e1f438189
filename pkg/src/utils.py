# src/utils.py
"""
Utility functions for URI-based resource resolution and JSON config loading.
Keeps run configs and outputs addressable the same way locally and in CI.
"""

import json
from pathlib import Path

from src.errors import ConfigError

# Assume repo layout: repo_root/{data,output,templates,src,tests}
REPO_ROOT = Path(__file__).resolve().parent.parent

URI_PREFIXES = {
    "data": REPO_ROOT / "data",
    "output": REPO_ROOT / "output",
    "templates": REPO_ROOT / "templates",
}


def resolve_uri(uri) -> Path:
    """
    Resolve a logical URI like 'data:benchmark_default.json' to a filesystem path.

    Prefixes:
      - data:      maps to REPO_ROOT/data
      - output:    maps to REPO_ROOT/output
      - templates: maps to REPO_ROOT/templates
    Plain paths are taken relative to the repo root (absolute paths stay as they are).
    """
    uri = str(uri)
    prefix, sep, name = uri.partition(":")
    if not sep or Path(uri).is_absolute():
        return REPO_ROOT / uri
    if prefix not in URI_PREFIXES:
        raise ValueError(f"Unknown URI prefix: {prefix}")
    return URI_PREFIXES[prefix] / name


def load_json(uri) -> dict:
    """Load a JSON object from a URI; syntax errors carry the line and column."""
    path = resolve_uri(uri)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: invalid JSON ({e.msg})") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return data


def write_json(data: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=False)
        f.write("\n")
    return path
