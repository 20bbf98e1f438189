# src/cli.py
"""
Command-line entry point.

    python -m src.cli simulate  --config data:simulate_default.json --out output:sim
    python -m src.cli estimate  output:sim/dataset.csv --method both --out output:est
    python -m src.cli benchmark --config data:benchmark_quick.json --out output:bench
    python -m src.cli gamma-fit --config data:gamma_fit_default.json --out output:gamma

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

import argparse
import logging
import sys

import numpy as np

from src.dataset import Dataset
from src.errors import ConfigError, DatasetSchemaError, InvalidParameterError, PeacError
from src.pipeline import run_benchmark, run_estimate, run_gamma_fit
from src.pulse_physics import PulseConfig
from src.render_templates import render_benchmark_report
from src.replication_stats import ReplicationConfig, write_reports
from src.run_manifest import RunManifest
from src.simulation import SimulationConfig, simulate
from src.tracking import log_run
from src.utils import resolve_uri, write_json
from src.validate_config import load_config

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
DEFAULT_BOOTSTRAP = 100


def _config(kind: str, uri, seed=None) -> dict:
    try:
        config = load_config(kind, uri)
    except FileNotFoundError as e:
        raise ConfigError(str(e)) from e
    if seed is not None:
        config["seed"] = seed
    return config


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    config = _config("simulate", args.config, args.seed)
    try:
        cfg = SimulationConfig.from_dict(config)
    except InvalidParameterError as e:
        raise ConfigError(f"invalid simulation config: {e}") from e
    dataset = simulate(cfg)

    out = resolve_uri(args.out)
    manifest = RunManifest("simulate", config, cfg.seed)
    path = dataset.to_csv(out / "dataset.csv")
    manifest.add_output(path)
    manifest.save(out)
    print(f"✅ Simulated {len(cfg.grid)} groups x {cfg.scan.n_shots} shots -> {path}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    config = _config("estimate", args.config, args.seed) if args.config else {}
    config.setdefault("seed", 0 if args.seed is None else args.seed)
    try:
        template = PulseConfig.from_dict(config.get("pulse", {}))
    except InvalidParameterError as e:
        raise ConfigError(f"invalid pulse template: {e}") from e
    n_bootstrap = args.bootstrap if args.bootstrap is not None else config.get("bootstrap", DEFAULT_BOOTSTRAP)
    seed = config.get("seed", 0)

    path = resolve_uri(args.dataset)
    try:
        dataset = Dataset.from_csv(path)
    except FileNotFoundError as e:
        raise DatasetSchemaError(str(e)) from e
    outcome = run_estimate(
        dataset,
        method=args.method,
        template=template,
        n_bootstrap=n_bootstrap,
        seed=seed,
        unwrap_order=config.get("unwrap_order", 1),
    )

    out = resolve_uri(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("estimate", {**config, "dataset": str(path), "method": args.method}, seed)
    table_path = out / "estimates.csv"
    outcome.table.to_csv(table_path, index=False, float_format="%.17g")
    summary_path = write_json({**outcome.summary(), "manifest": manifest.reference()}, out / "estimate_summary.json")
    for p in (table_path, summary_path):
        manifest.add_output(p)
    manifest.save(out)

    for name, fit in outcome.acceleration.items():
        print(f"✅ {name}: a_ext = {fit['a_ext_m_per_s2']:.6g} m/s^2 (+- {fit['stderr']:.2g})")
    if outcome.collapse:
        print(f"✅ collapse fit: a_ext = {outcome.collapse['a_ext_m_per_s2']:.6g} m/s^2")
    if outcome.failures:
        print(f"⚠️ {len(outcome.failures)} estimate(s) failed; see estimate_summary.json")

    if args.track:
        metrics = {k: v["a_ext_m_per_s2"] for k, v in outcome.acceleration.items()}
        log_run("estimate", {"method": args.method, "bootstrap": n_bootstrap}, metrics, [table_path, summary_path])
    return EXIT_OK


def cmd_benchmark(args) -> int:
    config = _config("benchmark", args.config, args.seed)
    cfg = ReplicationConfig.from_dict(config)
    reports, summary = run_benchmark(cfg, workers=args.threads)

    out = resolve_uri(args.out)
    manifest = RunManifest("benchmark", cfg.to_dict(), cfg.seed)
    csv_path, json_path = write_reports(reports, out, manifest.reference())
    summary_path = write_json({**summary, "manifest": manifest.reference()}, out / "summary.json")
    report_path = render_benchmark_report(summary, [r.to_dict() for r in reports], out)
    for p in (csv_path, json_path, summary_path, report_path):
        manifest.add_output(p)
    manifest.save(out)

    reduction = summary["bias_reduction"]["peac_sum_at_pi"]
    print(f"✅ {len(reports)} reports -> {csv_path}")
    print(f"📊 PEAC-sum bias reduction at pi: {reduction:.1%}")
    print(f"📊 peak-merge threshold A/sigma = {summary['merge_threshold']['mode_count']:.4f}")

    if args.track:
        log_run("benchmark", cfg.to_dict(), summary["bias_reduction"], [csv_path, summary_path, report_path])
    return EXIT_OK


def cmd_gamma_fit(args) -> int:
    config = _config("gamma-fit", args.config)
    try:
        result = run_gamma_fit(config)
    except InvalidParameterError as e:
        raise ConfigError(f"invalid gamma-fit config: {e}") from e

    out = resolve_uri(args.out)
    manifest = RunManifest("gamma-fit", config, None)
    path = write_json({**result, "manifest": manifest.reference()}, out / "gamma_fit.json")
    manifest.add_output(path)
    manifest.save(out)
    print(f"✅ gamma = {result['gamma']:.5f} (tau = {result['tau_s']:g} s)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="peac-bench", description=__doc__.splitlines()[1])
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a T-grid or theta-grid dataset")
    p.add_argument("--config", default="data:simulate_default.json")
    p.add_argument("--out", default="output:simulate")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="phase and acceleration estimates from a dataset")
    p.add_argument("dataset")
    p.add_argument("--config")
    p.add_argument("--method", choices=["peac", "ellipse", "both"], default="both")
    p.add_argument("--bootstrap", type=int, help=f"bootstrap resamples per T (default {DEFAULT_BOOTSTRAP}; 0 disables)")
    p.add_argument("--out", default="output:estimate")
    p.add_argument("--seed", type=int)
    p.add_argument("--track", action="store_true", help="log the run to MLflow")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("benchmark", help="bias/precision curves of all estimators")
    p.add_argument("--config", default="data:benchmark_default.json")
    p.add_argument("--out", default="output:benchmark")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--track", action="store_true", help="log the run to MLflow")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("gamma-fit", help="finite-pulse coefficient gamma")
    p.add_argument("--config", default="data:gamma_fit_default.json")
    p.add_argument("--out", default="output:gamma")
    p.set_defaults(func=cmd_gamma_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"❌ Config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetSchemaError as e:
        print(f"❌ Data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (PeacError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"❌ Numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
