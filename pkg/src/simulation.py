# src/simulation.py
"""
Synthetic interferometer datasets over a T grid or a theta grid.

Every shot shares one common phase phi0 across the m_F = +1, 0, -1 states;
each state gets its own Gaussian baseline draw:

    S_m = b_m + A0 cos(phi0 + m theta / 2),   S_all = sum_m lambda_m S_m
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from src.dataset import CHANNELS, Dataset
from src.errors import ConfigError
from src.pulse_physics import PulseConfig, T_of_theta, theta_of_T
from src.signal_model import (
    MixtureModel,
    ScanConfig,
    SignalParams,
    draw_phases,
    fringe_values,
    substream,
    sum_diff,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimulationConfig:
    mode: str = "T_grid"
    seed: Optional[int] = 0
    pulse: PulseConfig = field(default_factory=PulseConfig)
    T_grid: Tuple[float, ...] = tuple(np.round(np.linspace(1e-3, 3e-3, 21), 12))
    theta_grid: Tuple[float, ...] = ()
    scan: ScanConfig = field(default_factory=ScanConfig.evenly_spaced)
    mixture: MixtureModel = field(
        default_factory=lambda: MixtureModel.from_imbalance(0.42, 0.18, 0.79)
    )
    baseline: SignalParams = field(default_factory=lambda: SignalParams(0.79, 0.0, 0.063))
    channels: Tuple[str, ...] = CHANNELS

    @property
    def grid(self) -> np.ndarray:
        """Interrogation times of the dataset groups, in seconds."""
        if self.mode == "T_grid":
            return np.asarray(self.T_grid, dtype=float)
        return np.array([T_of_theta(self.pulse, theta) for theta in self.theta_grid])

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationConfig":
        mode = data.get("mode", "T_grid")
        if mode not in ("T_grid", "theta_grid"):
            raise ConfigError(f"unknown simulation mode {mode!r}")

        def linspace(section: Optional[dict], start: str, stop: str) -> Tuple[float, ...]:
            if not section:
                return ()
            values = np.linspace(section[start], section[stop], int(section["steps"]))
            return tuple(float(v) for v in values)

        T_grid = linspace(data.get("T_grid"), "start_s", "stop_s")
        theta_grid = linspace(data.get("theta_grid"), "start_rad", "stop_rad")
        if mode == "T_grid" and not T_grid:
            raise ConfigError("T_grid mode needs a T_grid section")
        if mode == "theta_grid" and not theta_grid:
            raise ConfigError("theta_grid mode needs a theta_grid section")

        scan = data.get("scan", {})
        seed = data.get("seed", 0)
        mix = data.get("mixture", {})
        base = data.get("baseline", {})
        a0 = mix.get("a0", 0.79)
        unknown = sorted(set(data.get("channels", CHANNELS)) - set(CHANNELS))
        if unknown:
            raise ConfigError(f"unknown channel(s): {', '.join(unknown)}")
        return cls(
            mode=mode,
            seed=seed,
            pulse=PulseConfig.from_dict(data.get("pulse", {})),
            T_grid=T_grid,
            theta_grid=theta_grid,
            scan=ScanConfig.evenly_spaced(
                scan.get("phases", 20),
                scan.get("repetitions", 15),
                scan.get("phase_stable", True),
                seed,
            ),
            mixture=MixtureModel.from_imbalance(
                mix.get("lambda0", 0.42),
                mix.get("delta_lambda", 0.18),
                a0,
                big_lambda=mix.get("Lambda", 1.0),
            ),
            baseline=SignalParams(a0, base.get("mean", 0.0), base.get("sigma", 0.063)),
            channels=tuple(data.get("channels", CHANNELS)),
        )


def simulate_shots(
    model: MixtureModel,
    baseline: SignalParams,
    scan: ScanConfig,
    rng: np.random.Generator,
) -> Dict[str, np.ndarray]:
    """All six channels for one scan (P*R shots) at the phase model.theta."""
    phi0 = draw_phases(scan, scan.n_shots, rng)
    half = 0.5 * model.theta
    states = {
        "plus": fringe_values(baseline, phi0, half, rng),
        "zero": fringe_values(baseline, phi0, 0.0, rng),
        "minus": fringe_values(baseline, phi0, -half, rng),
    }
    s_all = (
        model.lambda_plus * states["plus"]
        + model.lambda_0 * states["zero"]
        + model.lambda_minus * states["minus"]
    )
    s_sum, s_diff = sum_diff(states["plus"], states["minus"])
    return {**states, "all": s_all, "sum": s_sum, "diff": s_diff}


def simulate(cfg: SimulationConfig) -> Dataset:
    """One dataset group per grid point; group i draws from substream (seed, i)."""
    groups = []
    for index, T_s in enumerate(cfg.grid):
        theta = theta_of_T(cfg.pulse.at(T_s))
        rng = substream(cfg.seed, index)
        shots = simulate_shots(cfg.mixture.with_theta(theta), cfg.baseline, cfg.scan, rng)
        chosen = {name: shots[name] for name in cfg.channels}
        groups.append(Dataset.from_channels(T_s, chosen, cfg.scan.repetitions))
    logger.debug("simulated %d groups x %d shots", len(groups), cfg.scan.n_shots)
    return Dataset.concat(groups)
