# src/tracking.py
"""Optional MLflow logging of estimate/benchmark runs (never fails a run)."""

from pathlib import Path
from typing import Iterable, Mapping


def _flatten(values: Mapping, prefix: str = "") -> dict:
    flat = {}
    for key, value in values.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, prefix=f"{name}."))
        else:
            flat[name] = value
    return flat


def log_run(
    run_name: str,
    params: Mapping,
    metrics: Mapping,
    artifacts: Iterable = (),
) -> bool:
    """Log params, numeric metrics and output files; returns False when skipped."""
    try:
        import mlflow

        with mlflow.start_run(run_name=run_name, nested=True):
            for key, value in _flatten(params).items():
                mlflow.log_param(key, value)
            for key, value in _flatten(metrics).items():
                if isinstance(value, (int, float)) and not isinstance(value, bool):
                    mlflow.log_metric(key, float(value))
            for path in artifacts:
                mlflow.log_artifact(str(Path(path)), artifact_path=run_name)
        print(f"📊 {run_name} logged to MLflow")
        return True
    except Exception as e:
        print(f"⚠️ MLflow logging skipped: {e}")
        return False
