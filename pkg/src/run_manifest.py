# src/run_manifest.py
"""
Run manifest: what produced each output file.
Records command, config snapshot, seed, code version, timestamps and the
sha256 of every output, and saves it next to the outputs as manifest.json.
"""

import hashlib
import subprocess
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional

from src.utils import REPO_ROOT, load_json, write_json

MANIFEST_NAME = "manifest.json"


def code_version() -> str:
    """Installed package version, plus the git commit when run from a checkout."""
    try:
        version = metadata.version("peac-bench")
    except metadata.PackageNotFoundError:
        version = "0+unknown"
    try:
        commit = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=REPO_ROOT,
            capture_output=True,
            text=True,
            check=True,
        ).stdout.strip()
    except (OSError, subprocess.CalledProcessError):
        return version
    return f"{version}+g{commit}" if commit else version


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def sha256_of(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: Optional[int]
    version: str = field(default_factory=code_version)
    started_utc: str = field(default_factory=_now)
    finished_utc: Optional[str] = None
    outputs: List[Dict[str, str]] = field(default_factory=list)

    def reference(self) -> dict:
        """Small block embedded in JSON outputs so they point back to this manifest."""
        return {
            "file": MANIFEST_NAME,
            "command": self.command,
            "seed": self.seed,
        }

    def add_output(self, path) -> None:
        path = Path(path)
        self.outputs.append({"path": path.name, "sha256": sha256_of(path)})

    def save(self, out_dir) -> Path:
        self.finished_utc = _now()
        target = write_json(asdict(self), Path(out_dir) / MANIFEST_NAME)
        print(f"✅ Manifest written to {target}")
        return target


def check_outputs(out_dir) -> dict:
    """Re-hash listed outputs; maps each file to True (match), False (changed) or 'missing'."""
    out_dir = Path(out_dir)
    manifest = load_json(out_dir / MANIFEST_NAME)
    report = {}
    for entry in manifest.get("outputs", []):
        path = out_dir / entry["path"]
        report[entry["path"]] = sha256_of(path) == entry["sha256"] if path.exists() else "missing"

    for name, status in report.items():
        marker = "✅" if status is True else ("❌" if status is False else "⚠️")
        print(f"{marker} {name} ({status})")
    return report
