# src/pipeline.py
"""
Estimation and benchmark pipelines behind the CLI.
Each run_* function takes a validated config and returns plain data;
writing files is left to the caller.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from src.dataset import Dataset
from src.ellipse_estimator import ellipse_theta
from src.errors import PeacError
from src.peac_estimator import (
    CollapseFitResult,
    ThreeStateBranches,
    fit_channel_suite,
    fit_collapse_curve,
    fit_histogram,
    measure_merge_threshold,
    merge_threshold_curvature,
    reconstruct_theta_three_state,
    reconstruct_theta_two_state,
    unwrap,
    unwrap_three_state,
)
from src.pulse_physics import PulseConfig, closed_form_phase, fit_acceleration, fit_gamma
from src.replication_stats import (
    ReplicationConfig,
    bias_precision_curves,
    bias_reduction,
    bootstrap,
    optimal_working_point,
    role_exchange,
)
from src.signal_model import MixtureModel

logger = logging.getLogger(__name__)

PRECONDITIONING_NOTE = (
    "Ellipse fits centre the points on their mean and scale them isotropically "
    "before the direct least-squares step; coefficients are mapped back afterwards."
)


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


@dataclass
class EstimateOutcome:
    table: pd.DataFrame
    collapse: Optional[dict] = None
    acceleration: Dict[str, dict] = field(default_factory=dict)
    failures: List[dict] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "collapse_fit": self.collapse,
            "acceleration": self.acceleration,
            "failures": self.failures,
        }


def _peac_theta(pairs: np.ndarray) -> float:
    suite = fit_channel_suite({"plus": pairs[:, 0], "minus": pairs[:, 1]})
    return reconstruct_theta_two_state(suite.sum.params.amplitude, suite.a0)


def run_estimate(
    dataset: Dataset,
    method: str = "both",
    template: Optional[PulseConfig] = None,
    n_bootstrap: int = 0,
    seed: Optional[int] = 0,
    unwrap_order: int = 1,
) -> EstimateOutcome:
    """
    Per-T phases for PEAC (S_sum) and/or the ellipse fit, their unwrapped
    series and acceleration fits, plus the collapse-curve fit when the
    dataset carries the `all` channel over several T.
    """
    template = template or PulseConfig()
    dataset.validate(required=["plus", "minus"])
    methods = ["peac_sum", "ellipse"] if method == "both" else (
        ["peac_sum"] if method == "peac" else ["ellipse"]
    )
    rows, failures = [], []
    collapse_T, collapse_A = [], []
    has_all = "all" in dataset.channel_names()

    for T_s in dataset.times():
        chans = dataset.channels_at(T_s)
        pairs = np.column_stack([chans["plus"], chans["minus"]])
        for name in methods:
            row = {"T_s": T_s, "method": name, "a0": np.nan, "amplitude": np.nan,
                   "theta_wrapped": np.nan, "theta_std": np.nan}
            try:
                if name == "peac_sum":
                    suite = fit_channel_suite(chans)
                    row["a0"] = suite.a0
                    row["amplitude"] = suite.sum.params.amplitude
                    row["theta_wrapped"] = reconstruct_theta_two_state(
                        suite.sum.params.amplitude, suite.a0
                    )
                    statistic = _peac_theta
                else:
                    row["theta_wrapped"] = ellipse_theta(chans["minus"], chans["plus"])
                    statistic = lambda p: ellipse_theta(p[:, 1], p[:, 0])  # noqa: E731
                if n_bootstrap >= 2:
                    row["theta_std"] = bootstrap(pairs, n_bootstrap, statistic, seed).std
            except PeacError as e:
                failures.append({"T_s": float(T_s), "method": name, "error": str(e)})
                logger.warning("%s failed at T=%.6g s: %s", name, T_s, e)
            rows.append(row)

        if has_all:
            try:
                collapse_A.append(fit_histogram(chans["all"]).params.amplitude)
                collapse_T.append(T_s)
            except PeacError as e:
                failures.append({"T_s": float(T_s), "method": "collapse", "error": str(e)})

    table = pd.DataFrame(rows)
    table["theta_unwrapped"] = np.nan
    acceleration = {}
    for name in methods:
        mask = (table["method"] == name) & table["theta_wrapped"].notna()
        if mask.sum() < 2:
            continue
        series = unwrap(table.loc[mask, "theta_wrapped"].to_numpy(), order=unwrap_order)
        table.loc[mask, "theta_unwrapped"] = series
        a_ext, stderr = fit_acceleration(table.loc[mask, "T_s"].to_numpy(), series, template)
        acceleration[name] = {"a_ext_m_per_s2": a_ext, "stderr": stderr}

    collapse = None
    if len(collapse_T) >= 4:
        try:
            fit = fit_collapse_curve(collapse_T, collapse_A, template)
        except PeacError as e:
            failures.append({"T_s": None, "method": "collapse", "error": str(e)})
            logger.warning("collapse-curve fit failed: %s", e)
        else:
            collapse = fit.to_dict()
            collapse["T_s"] = [float(t) for t in collapse_T]
            collapse["amplitude_all"] = [float(a) for a in collapse_A]
            pointwise = _all_pointwise(
                collapse_T, collapse_A, fit, template, unwrap_order, failures
            )
            if pointwise is not None:
                table = pd.concat([table, pointwise], ignore_index=True)
                usable = pointwise["theta_unwrapped"].notna()
                if usable.sum() >= 2:
                    a_ext, stderr = fit_acceleration(
                        pointwise.loc[usable, "T_s"].to_numpy(),
                        pointwise.loc[usable, "theta_unwrapped"].to_numpy(),
                        template,
                    )
                    acceleration["all_pointwise"] = {"a_ext_m_per_s2": a_ext, "stderr": stderr}
    return EstimateOutcome(table, collapse, acceleration, failures)


def _all_pointwise(
    T_values: List[float],
    amplitudes: List[float],
    fit: CollapseFitResult,
    template: PulseConfig,
    order: int,
    failures: List[dict],
) -> Optional[pd.DataFrame]:
    """
    Invert A_all at each T with the fitted weights and amplitude, then pick
    the continuous branch. The first point starts from the phase the
    collapse fit predicts there.
    """
    try:
        model = MixtureModel.from_imbalance(fit.lambda_0, fit.delta_lambda, fit.a0)
    except PeacError as e:
        failures.append({"T_s": None, "method": "all_pointwise", "error": str(e)})
        logger.warning("pointwise A_all inversion skipped: %s", e)
        return None

    branches = []
    for T_s, a_all in zip(T_values, amplitudes):
        try:
            branches.append(reconstruct_theta_three_state(a_all, model))
        except PeacError as e:
            failures.append({"T_s": float(T_s), "method": "all_pointwise", "error": str(e)})
            logger.warning("all_pointwise failed at T=%.6g s: %s", T_s, e)
            branches.append(ThreeStateBranches(math.nan, math.nan))

    first = next(
        (i for i, pair in enumerate(branches) if not all(math.isnan(b) for b in pair)), None
    )
    if first is None:
        return None
    start = closed_form_phase(
        T_values[first], fit.a_ext, template.tau_s, template.k_eff_rad_per_m, template.gamma
    )
    series = unwrap_three_state(branches, order=order, start=float(start), times=T_values)
    return pd.DataFrame(
        {
            "T_s": [float(t) for t in T_values],
            "method": "all_pointwise",
            "a0": fit.a0,
            "amplitude": [float(a) for a in amplitudes],
            "theta_wrapped": 2.0 * np.arccos(np.cos(0.5 * series)),
            "theta_std": np.nan,
            "theta_unwrapped": series,
        }
    )


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------


def run_benchmark(cfg: ReplicationConfig, workers: int = 1):
    """Bias/precision reports plus the summary written next to them."""
    reports = bias_precision_curves(cfg, workers=workers)
    summary = {
        "bias_reduction": {
            "peac_sum_at_pi": bias_reduction(reports, math.pi, "peac_sum"),
            "peac_diff_at_2pi": bias_reduction(reports, 2.0 * math.pi, "peac_diff"),
        },
        "merge_threshold": {
            "mode_count": measure_merge_threshold(),
            "curvature": merge_threshold_curvature(),
        },
        "failures": {
            m: int(sum(r.n_failures for r in reports if r.method == m)) for m in cfg.methods
        },
        "role_exchange": [row._asdict() for row in role_exchange(reports)],
        "preconditioning": PRECONDITIONING_NOTE,
    }
    try:
        summary["optimal_working_point"] = optimal_working_point(reports)._asdict()
    except PeacError:
        summary["optimal_working_point"] = None
    return reports, summary


# ---------------------------------------------------------------------------
# gamma-fit
# ---------------------------------------------------------------------------


def run_gamma_fit(config: dict) -> dict:
    grid = config.get("T_grid", {"start_s": 1e-3, "stop_s": 3e-3, "steps": 21})
    T_grid = np.linspace(grid["start_s"], grid["stop_s"], int(grid["steps"]))
    pulse = PulseConfig.from_dict(config.get("pulse", {}))
    gamma = fit_gamma(pulse.tau_s, T_grid, pulse.a_ext_m_per_s2, pulse.k_eff_rad_per_m)
    return {
        "gamma": gamma,
        "tau_s": pulse.tau_s,
        "a_ext_m_per_s2": pulse.a_ext_m_per_s2,
        "T_grid_s": [float(t) for t in T_grid],
    }
