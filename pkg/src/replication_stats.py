# src/replication_stats.py
"""
Bootstrap and fresh-sample replication for the phase estimators.

Datasets are drawn per (theta index, dataset index) from independent Philox
substreams, so results do not depend on worker count or scheduling.
Estimator failures are never dropped silently: each one is counted in the
report of its (theta, method).
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.dataset import Dataset
from src.ellipse_estimator import ellipse_theta
from src.errors import ConfigError, InvalidParameterError, PeacError
from src.peac_estimator import (
    fit_channel_suite,
    fit_histogram,
    nearest_branch,
    reconstruct_theta_from_diff,
    reconstruct_theta_two_state,
)
from src.signal_model import SignalParams, fringe_values, substream, sum_diff
from src.utils import write_json

logger = logging.getLogger(__name__)

METHODS = ("ellipse", "peac_sum", "peac_diff")
REPORT_COLUMNS = ["theta_set", "method", "theta_rec_mean", "theta_bias", "delta_theta", "n_failures"]
_ESTIMATOR_ERRORS = (PeacError, np.linalg.LinAlgError, FloatingPointError)


@dataclass(frozen=True)
class ReplicationConfig:
    n_datasets: int = 1000
    n_points: int = 300
    a0: float = 0.824
    sigma: float = 0.063
    mu: float = 0.0
    theta_grid: Tuple[float, ...] = (0.5 * math.pi, math.pi)
    seed: Optional[int] = 0
    methods: Tuple[str, ...] = METHODS
    n_bootstrap: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "theta_grid", tuple(float(t) for t in self.theta_grid))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.n_datasets < 1:
            raise InvalidParameterError("n_datasets must be >= 1")
        if self.n_points < 6:
            raise InvalidParameterError("n_points must be >= 6 (ellipse fit minimum)")
        if self.n_bootstrap < 2:
            raise InvalidParameterError("n_bootstrap must be >= 2")
        if not (self.a0 > 0 and self.sigma >= 0):
            raise InvalidParameterError("a0 must be > 0 and sigma >= 0")
        unknown = sorted(set(self.methods) - set(METHODS))
        if unknown:
            raise InvalidParameterError(f"unknown method(s): {', '.join(unknown)}")

    @property
    def signal(self) -> SignalParams:
        return SignalParams(self.a0, self.mu, self.sigma)

    @classmethod
    def from_dict(cls, data: dict) -> "ReplicationConfig":
        grid = data.get("theta_grid", list(cls.theta_grid))
        if isinstance(grid, dict):
            grid = np.linspace(grid["start_rad"], grid["stop_rad"], int(grid["steps"]))
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data and k != "theta_grid"}
        try:
            return cls(theta_grid=tuple(grid), **known)
        except (TypeError, InvalidParameterError) as e:
            raise ConfigError(f"invalid replication config: {e}") from e

    def to_dict(self) -> dict:
        data = asdict(self)
        data["theta_grid"] = list(self.theta_grid)
        data["methods"] = list(self.methods)
        return data


# ---------------------------------------------------------------------------
# Bootstrap
# ---------------------------------------------------------------------------


class BootstrapResult(NamedTuple):
    mean: float
    std: float
    n_failures: int
    estimates: np.ndarray


def bootstrap(
    values,
    b: int,
    statistic: Callable[[np.ndarray], float],
    seed: Optional[int] = None,
) -> BootstrapResult:
    """
    b resamples of size n with replacement; the original sample is resample 0.

    Rows (axis 0) are resampled, so paired data stay paired. A statistic that
    raises on a resample excludes it and is counted in n_failures.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0 or values.shape[0] == 0:
        raise InvalidParameterError("bootstrap needs a non-empty sample")
    if b < 2:
        raise InvalidParameterError(f"b must be >= 2, got {b}")
    rng = substream(seed, 0)
    n = values.shape[0]
    estimates = []
    failures = 0
    for index in range(b):
        sample = values if index == 0 else values[rng.integers(0, n, size=n)]
        try:
            estimates.append(float(statistic(sample)))
        except _ESTIMATOR_ERRORS as e:
            failures += 1
            logger.debug("bootstrap resample %d failed: %s", index, e)
    estimates = np.asarray(estimates)
    if estimates.size == 0:
        return BootstrapResult(float("nan"), float("nan"), failures, estimates)
    # deviations from the first estimate so identical estimates give exactly 0
    std = float(np.std(estimates - estimates[0], ddof=1)) if estimates.size > 1 else float("nan")
    return BootstrapResult(float(estimates.mean()), std, failures, estimates)


# ---------------------------------------------------------------------------
# Replication
# ---------------------------------------------------------------------------


class Replica(NamedTuple):
    theta_index: int
    dataset_index: int
    theta_set: float
    s_plus: np.ndarray
    s_minus: np.ndarray

    def to_dataset(self) -> Dataset:
        s_sum, s_diff = sum_diff(self.s_plus, self.s_minus)
        return Dataset.from_channels(
            0.0,
            {"plus": self.s_plus, "minus": self.s_minus, "sum": s_sum, "diff": s_diff},
        )


def draw_replica(cfg: ReplicationConfig, theta_index: int, dataset_index: int) -> Replica:
    """S+- = b+- + A0 cos(phi0 +- theta/2) with uniform phi0 and independent baselines."""
    theta = cfg.theta_grid[theta_index]
    rng = substream(cfg.seed, theta_index, dataset_index)
    phi0 = rng.uniform(0.0, 2.0 * np.pi, size=cfg.n_points)
    s_plus = fringe_values(cfg.signal, phi0, 0.5 * theta, rng)
    s_minus = fringe_values(cfg.signal, phi0, -0.5 * theta, rng)
    return Replica(theta_index, dataset_index, theta, s_plus, s_minus)


def replicate(cfg: ReplicationConfig) -> Iterator[Replica]:
    """n_datasets replicas for every theta in the grid, in grid order."""
    for i in range(len(cfg.theta_grid)):
        for j in range(cfg.n_datasets):
            yield draw_replica(cfg, i, j)


def estimate_replica(replica: Replica, methods: Sequence[str] = METHODS) -> Dict[str, float]:
    """Wrapped phase in [0, pi] per method; NaN marks an estimator failure."""
    out = {}
    if "ellipse" in methods:
        try:
            out["ellipse"] = ellipse_theta(replica.s_minus, replica.s_plus)
        except _ESTIMATOR_ERRORS as e:
            logger.debug("ellipse failed on replica %s: %s", replica[:2], e)
            out["ellipse"] = float("nan")
    peac = [m for m in ("peac_sum", "peac_diff") if m in methods]
    if peac:
        try:
            suite = fit_channel_suite({"plus": replica.s_plus, "minus": replica.s_minus})
        except _ESTIMATOR_ERRORS as e:
            logger.debug("PEAC fit failed on replica %s: %s", replica[:2], e)
            suite = None
        for method in peac:
            try:
                if suite is None:
                    raise InvalidParameterError("no channel fit")
                if method == "peac_sum":
                    out[method] = reconstruct_theta_two_state(suite.sum.params.amplitude, suite.a0)
                else:
                    out[method] = reconstruct_theta_from_diff(suite.diff.params.amplitude, suite.a0)
            except _ESTIMATOR_ERRORS:
                out[method] = float("nan")
    return out


def _replica_task(task: Tuple[ReplicationConfig, int, int]) -> Dict[str, float]:
    cfg, i, j = task
    return estimate_replica(draw_replica(cfg, i, j), cfg.methods)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimateReport:
    theta_set: float
    method: str
    theta_rec_mean: float
    theta_bias: float
    delta_theta: float
    n_failures: int
    n_used: int

    @property
    def bias_stderr(self) -> float:
        return self.delta_theta / math.sqrt(self.n_used) if self.n_used > 0 else float("nan")

    @property
    def delta_stderr(self) -> float:
        """Standard error of the sample std (normal approximation)."""
        if self.n_used < 2:
            return float("nan")
        return self.delta_theta / math.sqrt(2.0 * (self.n_used - 1))

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(theta_set: float, method: str, wrapped: Sequence[float]) -> EstimateReport:
    """Branch-fix each wrapped phase toward theta_set, then take moments over the successes."""
    wrapped = np.asarray(wrapped, dtype=float)
    ok = np.isfinite(wrapped)
    fixed = np.array([nearest_branch(w, theta_set) for w in wrapped[ok]])
    n_used = int(fixed.size)
    n_failures = int(wrapped.size - n_used)
    if n_failures:
        logger.warning(
            "%s at theta=%.4f: %d of %d datasets excluded", method, theta_set, n_failures, wrapped.size
        )
    mean = float(fixed.mean()) if n_used else float("nan")
    delta = float(fixed.std(ddof=1)) if n_used > 1 else float("nan")
    return EstimateReport(theta_set, method, mean, mean - theta_set, delta, n_failures, n_used)


def bias_precision_curves(cfg: ReplicationConfig, workers: int = 1) -> List[EstimateReport]:
    """
    Run every method on every replica and reduce to one report per (theta, method).

    Reports are ordered by theta grid, then by cfg.methods, whatever `workers` is.
    """
    if not cfg.theta_grid:
        raise InvalidParameterError("theta_grid must not be empty")
    tasks = [(cfg, i, j) for i in range(len(cfg.theta_grid)) for j in range(cfg.n_datasets)]
    if workers > 1:
        chunk = max(1, len(tasks) // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replica_task, tasks, chunksize=chunk))
    else:
        results = [_replica_task(task) for task in tasks]

    reports = []
    for i, theta in enumerate(cfg.theta_grid):
        block = results[i * cfg.n_datasets : (i + 1) * cfg.n_datasets]
        for method in cfg.methods:
            reports.append(summarize(theta, method, [r[method] for r in block]))
    return reports


def reports_to_frame(reports: Sequence[EstimateReport]) -> pd.DataFrame:
    frame = pd.DataFrame([r.to_dict() for r in reports])
    if frame.empty:
        return pd.DataFrame(columns=REPORT_COLUMNS)
    return frame[REPORT_COLUMNS]


def write_reports(reports: Sequence[EstimateReport], out_dir, manifest: Optional[dict] = None):
    """bias_precision.csv and bias_precision.json; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "bias_precision.csv"
    reports_to_frame(reports).to_csv(csv_path, index=False, float_format="%.17g")
    payload = {"reports": [r.to_dict() for r in reports]}
    if manifest is not None:
        payload["manifest"] = manifest
    json_path = write_json(payload, out_dir / "bias_precision.json")
    return csv_path, json_path


# ---------------------------------------------------------------------------
# Derived analyses
# ---------------------------------------------------------------------------


def _find(reports: Sequence[EstimateReport], method: str, theta: float, tol: float = 1e-9):
    for report in reports:
        if report.method == method and abs(report.theta_set - theta) <= tol:
            return report
    return None


def bias_reduction(
    reports: Sequence[EstimateReport], theta: float, method: str, baseline: str = "ellipse"
) -> float:
    """1 - |bias(method)| / |bias(baseline)| at theta (NaN if either report is missing)."""
    ours, theirs = _find(reports, method, theta), _find(reports, baseline, theta)
    if ours is None or theirs is None or theirs.theta_bias == 0:
        return float("nan")
    return 1.0 - abs(ours.theta_bias) / abs(theirs.theta_bias)


class RoleExchangeRow(NamedTuple):
    theta_sum: float
    theta_diff: float
    bias_sum: float
    bias_diff: float
    bias_z: float
    delta_sum: float
    delta_diff: float
    delta_z: float


def role_exchange(reports: Sequence[EstimateReport]) -> List[RoleExchangeRow]:
    """
    Pair PEAC-sum at theta with PEAC-diff at theta + pi and measure the
    disagreement in combined standard errors.
    """
    rows = []
    for ours in (r for r in reports if r.method == "peac_sum"):
        other = _find(reports, "peac_diff", ours.theta_set + math.pi, tol=1e-6)
        if other is None:
            continue
        bias_se = math.hypot(ours.bias_stderr, other.bias_stderr)
        delta_se = math.hypot(ours.delta_stderr, other.delta_stderr)
        rows.append(
            RoleExchangeRow(
                ours.theta_set,
                other.theta_set,
                ours.theta_bias,
                other.theta_bias,
                abs(ours.theta_bias - other.theta_bias) / bias_se if bias_se > 0 else 0.0,
                ours.delta_theta,
                other.delta_theta,
                abs(ours.delta_theta - other.delta_theta) / delta_se if delta_se > 0 else 0.0,
            )
        )
    return rows


class WorkingPoint(NamedTuple):
    theta: float
    delta_theta: float
    delta_at_reference: float
    ratio: float


def optimal_working_point(
    reports: Sequence[EstimateReport], method: str = "peac_sum", reference: float = math.pi
) -> WorkingPoint:
    """theta with the smallest delta_theta, and delta(reference) / that minimum."""
    candidates = [r for r in reports if r.method == method and math.isfinite(r.delta_theta)]
    if not candidates:
        raise InvalidParameterError(f"no finite reports for method {method!r}")
    best = min(candidates, key=lambda r: r.delta_theta)
    ref = _find(candidates, method, reference, tol=1e-6)
    at_ref = ref.delta_theta if ref is not None else float("nan")
    return WorkingPoint(best.theta_set, best.delta_theta, at_ref, at_ref / best.delta_theta)


class BootstrapComparison(NamedTuple):
    bootstrap_std: float
    fresh_std: float
    ratio: float
    n_failures: int


def _sum_amplitude(pairs: np.ndarray) -> float:
    s_sum, _ = sum_diff(pairs[:, 0], pairs[:, 1])
    return fit_histogram(s_sum).params.amplitude


def bootstrap_versus_fresh(
    cfg: ReplicationConfig, theta_index: int = 0, b: Optional[int] = None
) -> BootstrapComparison:
    """
    Spread of the fitted S_sum amplitude: bootstrap of dataset 0 against
    n_datasets fresh datasets at the same theta.
    """
    b = cfg.n_bootstrap if b is None else b
    first = draw_replica(cfg, theta_index, 0)
    pairs = np.column_stack([first.s_plus, first.s_minus])
    boot = bootstrap(pairs, b, _sum_amplitude, seed=cfg.seed)

    fresh, failures = [], boot.n_failures
    for j in range(cfg.n_datasets):
        replica = draw_replica(cfg, theta_index, j)
        try:
            fresh.append(_sum_amplitude(np.column_stack([replica.s_plus, replica.s_minus])))
        except _ESTIMATOR_ERRORS:
            failures += 1
    fresh_std = float(np.std(fresh, ddof=1)) if len(fresh) > 1 else float("nan")
    return BootstrapComparison(boot.std, fresh_std, boot.std / fresh_std, failures)
