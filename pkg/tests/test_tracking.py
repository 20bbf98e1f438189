# tests/test_tracking.py

import sys
import types
from contextlib import contextmanager

from src.tracking import _flatten, log_run


def test_flatten_nested_values():
    assert _flatten({"a": 1, "b": {"c": 2, "d": {"e": 3}}}) == {"a": 1, "b.c": 2, "b.d.e": 3}


def _fake_mlflow(calls):
    module = types.ModuleType("mlflow")

    @contextmanager
    def start_run(run_name=None, nested=False):
        calls.append(("run", run_name))
        yield

    module.start_run = start_run
    module.log_param = lambda k, v: calls.append(("param", k, v))
    module.log_metric = lambda k, v: calls.append(("metric", k, v))
    module.log_artifact = lambda p, artifact_path=None: calls.append(("artifact", p, artifact_path))
    return module


def test_log_run_sends_params_metrics_and_artifacts(monkeypatch, tmp_path, capsys):
    calls = []
    monkeypatch.setitem(sys.modules, "mlflow", _fake_mlflow(calls))
    artifact = tmp_path / "summary.json"
    artifact.write_text("{}")

    ok = log_run("benchmark", {"n_datasets": 5}, {"bias": {"pi": 0.8}, "label": "x", "flag": True}, [artifact])

    assert ok
    assert ("param", "n_datasets", 5) in calls
    assert ("metric", "bias.pi", 0.8) in calls
    assert not any(c[0] == "metric" and c[1] in ("label", "flag") for c in calls)
    assert ("artifact", str(artifact), "benchmark") in calls
    assert "📊 benchmark logged to MLflow" in capsys.readouterr().out


def test_log_run_is_skipped_when_mlflow_fails(monkeypatch, capsys):
    module = types.ModuleType("mlflow")

    def start_run(**kwargs):
        raise RuntimeError("no tracking server")

    module.start_run = start_run
    monkeypatch.setitem(sys.modules, "mlflow", module)
    assert log_run("estimate", {}, {}) is False
    assert "⚠️ MLflow logging skipped: no tracking server" in capsys.readouterr().out
