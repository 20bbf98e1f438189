# src/validate_config.py

import re
import sys
from pathlib import Path

from jsonschema import Draft7Validator

from src.errors import ConfigError
from src.utils import load_json, resolve_uri

SCHEMAS = {
    "simulate": "data:simulate.schema.json",
    "benchmark": "data:benchmark.schema.json",
    "gamma-fit": "data:gamma_fit.schema.json",
    "estimate": "data:estimate.schema.json",
}


def _locate(text: str, path) -> int:
    """Best-effort source line of the JSON key at the end of `path` (0 if unknown)."""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return 0
    match = re.search(r'"%s"\s*:' % re.escape(keys[-1]), text)
    if match is None:
        return 0
    return text.count("\n", 0, match.start()) + 1


def validate_config(config_file, schema_file) -> dict:
    """
    Validate a run config against its JSON schema.

    Returns the parsed config. Raises ConfigError listing every violation
    as '<file>:<line>: <json path>: <message>'.
    """
    config_path = resolve_uri(config_file)
    config = load_json(config_path)
    schema = load_json(schema_file)

    text = Path(config_path).read_text(encoding="utf-8")
    errors = []
    for error in sorted(Draft7Validator(schema).iter_errors(config), key=lambda e: list(e.path)):
        json_path = "/".join(str(p) for p in error.absolute_path) or "<root>"
        line = _locate(text, error.absolute_path)
        errors.append(f"{config_path}:{line}: {json_path}: {error.message}")

    if errors:
        raise ConfigError("config validation failed:\n - " + "\n - ".join(errors))
    return config


def load_config(kind: str, config_file) -> dict:
    """Validate against the schema registered for a CLI command."""
    if kind not in SCHEMAS:
        raise ConfigError(f"no schema for config kind {kind!r}")
    return validate_config(config_file, SCHEMAS[kind])


if __name__ == "__main__":
    if len(sys.argv) < 3:
        print("Usage: python3 -m src.validate_config <config_file> <schema_file>")
        sys.exit(1)

    try:
        validate_config(sys.argv[1], sys.argv[2])
    except (ConfigError, FileNotFoundError) as e:
        print(f"❌ Validation error: {e}")
        sys.exit(2)
    print("✅ Config validation passed")
