# src/pulse_physics.py
"""
Differential phase of a Bragg Mach-Zehnder interferometer versus interrogation time.

Two evaluations are provided:
  - finite_pulse_phase: numerical integral over the Blackman-shaped
    pi/2 - pi - pi/2 pulse train,
  - theta_of_T / T_of_theta: the closed form 2 k a T^2 (1 + gamma tau / T)
    and its inverse.
fit_gamma links the two.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from src.errors import (
    InvalidParameterError,
    NoSolutionError,
    NumericalIntegrationError,
)

logger = logging.getLogger(__name__)

WAVELENGTH_M = 780.226e-9
K_EFF = 2.0 * 2.0 * math.pi / WAVELENGTH_M
DEFAULT_TAU_S = 100e-6
DEFAULT_GAMMA = 0.1486
DEFAULT_A_EXT = 32.2e-3
BLACKMAN_AREA = 0.42  # integral of the Blackman window over [0, tau], in units of tau

STEPS_PER_PULSE = 200
CONVERGENCE_RTOL = 1e-6
MAX_REFINEMENTS = 4


@dataclass(frozen=True)
class PulseConfig:
    a_ext_m_per_s2: float = DEFAULT_A_EXT
    T_s: float = 1e-3
    tau_s: float = DEFAULT_TAU_S
    k_eff_rad_per_m: float = K_EFF
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value):
                raise InvalidParameterError(f"{name} must be finite, got {value!r}")
        if self.k_eff_rad_per_m <= 0:
            raise InvalidParameterError("k_eff must be > 0")
        if self.tau_s <= 0:
            raise InvalidParameterError("tau must be > 0")
        if self.T_s < 0:
            raise InvalidParameterError("T must be >= 0")

    @property
    def omega0(self) -> float:
        """Peak Rabi frequency fixed by 0.42 Omega0 tau = pi/2."""
        return 0.5 * math.pi / (BLACKMAN_AREA * self.tau_s)

    def at(self, T_s: float) -> "PulseConfig":
        return replace(self, T_s=float(T_s))

    @classmethod
    def from_dict(cls, data: dict) -> "PulseConfig":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Pulse shape
# ---------------------------------------------------------------------------


def blackman(t, tau: float):
    """Blackman envelope on [0, tau], zero outside."""
    t = np.asarray(t, dtype=float)
    x = 2.0 * np.pi * t / tau
    inside = (t >= 0.0) & (t <= tau)
    value = np.where(inside, 0.42 - 0.5 * np.cos(x) + 0.08 * np.cos(2.0 * x), 0.0)
    return float(value) if value.ndim == 0 else value


def rabi_train(t, cfg: PulseConfig):
    """Omega(t) = Omega0 [f(t) + 2 f(t - T) + f(t - 2T)]."""
    T, tau = cfg.T_s, cfg.tau_s
    return cfg.omega0 * (
        blackman(t, tau) + 2.0 * blackman(t - T, tau) + blackman(t - 2.0 * T, tau)
    )


# ---------------------------------------------------------------------------
# Finite-pulse phase
# ---------------------------------------------------------------------------


def _segment_grid(start: float, stop: float, step: float) -> np.ndarray:
    intervals = max(2, math.ceil((stop - start) / step))
    intervals += intervals % 2
    return np.linspace(start, stop, intervals + 1)


def _phase_integral(cfg: PulseConfig, step: float) -> float:
    """2 * integral of k a t sin(phi1(t)), piecewise over pulse/free segments."""
    T, tau = cfg.T_s, cfg.tau_s
    edges = [0.0, tau, T, T + tau, 2.0 * T, 2.0 * T + tau]
    area = 0.0
    total = 0.0
    for index, (start, stop) in enumerate(zip(edges[:-1], edges[1:])):
        # phi1 is constant between pulses, the integrand there is linear in t
        seg_step = step if index % 2 == 0 else (stop - start) / 8.0
        t = _segment_grid(start, stop, seg_step)
        phi1 = area + cumulative_simpson(rabi_train(t, cfg), x=t, initial=0.0)
        total += simpson(t * np.sin(phi1), x=t)
        area = phi1[-1]
    # sign fixed so the instantaneous-pulse limit is +2 k a T^2
    return -2.0 * cfg.k_eff_rad_per_m * cfg.a_ext_m_per_s2 * total


def finite_pulse_phase(
    cfg: PulseConfig,
    steps_per_pulse: int = STEPS_PER_PULSE,
    rtol: float = CONVERGENCE_RTOL,
    max_refinements: int = MAX_REFINEMENTS,
) -> float:
    """
    Differential phase theta(T) for finite Blackman pulses.

    The accumulated pulse area phi1(t) and the phase integral share one
    Simpson grid with step tau/steps_per_pulse. The step is halved until two
    successive results agree to rtol.
    """
    if cfg.T_s <= cfg.tau_s:
        raise InvalidParameterError(
            f"pulses overlap: T={cfg.T_s:g} s must exceed tau={cfg.tau_s:g} s"
        )
    if cfg.a_ext_m_per_s2 == 0.0:
        return 0.0
    step = cfg.tau_s / steps_per_pulse
    previous = _phase_integral(cfg, step)
    history = [(step, previous)]
    for _ in range(max_refinements):
        step *= 0.5
        current = _phase_integral(cfg, step)
        history.append((step, current))
        if abs(current - previous) <= rtol * abs(current):
            return previous
        previous = current
    raise NumericalIntegrationError(
        f"phase integral did not converge to rtol={rtol:g}",
        diagnostics={"steps": [h for h, _ in history], "values": [v for _, v in history]},
    )


# ---------------------------------------------------------------------------
# Closed form
# ---------------------------------------------------------------------------


def closed_form_phase(T, a_ext, tau, k_eff=K_EFF, gamma=DEFAULT_GAMMA):
    """2 k a T^2 (1 + gamma tau / T), vectorised over T and a_ext."""
    T = np.asarray(T, dtype=float)
    return 2.0 * k_eff * a_ext * (T * T + gamma * tau * T)


def theta_of_T(cfg: PulseConfig) -> float:
    return float(
        closed_form_phase(
            cfg.T_s, cfg.a_ext_m_per_s2, cfg.tau_s, cfg.k_eff_rad_per_m, cfg.gamma
        )
    )


def T_of_theta(cfg: PulseConfig, theta: float) -> float:
    """Invert the closed form for T (positive root of T^2 + gamma tau T - c = 0)."""
    if cfg.a_ext_m_per_s2 <= 0:
        raise InvalidParameterError("inversion needs a_ext > 0")
    c = theta / (2.0 * cfg.k_eff_rad_per_m * cfg.a_ext_m_per_s2)
    b = cfg.gamma * cfg.tau_s
    disc = b * b + 4.0 * c
    if disc < 0:
        raise NoSolutionError(f"no real T for theta={theta:g} rad")
    root = math.sqrt(disc)
    if b + root == 0.0:
        return 0.0
    # stable form of (-b + root) / 2
    return 2.0 * c / (b + root)


def fit_acceleration(T_grid: Sequence[float], theta: Sequence[float], template: PulseConfig):
    """
    Linear least-squares a_ext from a phase series theta(T) and the closed form.

    Returns (a_ext, standard error).
    """
    T_grid = np.asarray(T_grid, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if T_grid.size < 1 or T_grid.shape != theta.shape:
        raise InvalidParameterError("T grid and phases must be equal, non-empty arrays")
    basis = closed_form_phase(
        T_grid, 1.0, template.tau_s, template.k_eff_rad_per_m, template.gamma
    )
    design = basis[:, None]
    solution, _, _, _ = np.linalg.lstsq(design, theta, rcond=None)
    a_ext = float(solution[0])
    dof = T_grid.size - 1
    if dof > 0:
        residual = theta - a_ext * basis
        stderr = math.sqrt(float(residual @ residual) / dof / float(basis @ basis))
    else:
        stderr = float("nan")
    return a_ext, stderr


def fit_gamma(
    tau: float = DEFAULT_TAU_S,
    T_grid: Sequence[float] = tuple(np.linspace(1e-3, 3e-3, 21)),
    a_ext: float = DEFAULT_A_EXT,
    k_eff: float = K_EFF,
) -> float:
    """
    Fit gamma in 2 k a T^2 (1 + gamma tau / T) to finite_pulse_phase over T_grid.

    The model is linear in gamma, so the unweighted least-squares problem is
    solved directly.
    """
    T_grid = np.asarray(T_grid, dtype=float)
    if T_grid.size < 2:
        raise InvalidParameterError("fit_gamma needs at least 2 grid points")
    template = PulseConfig(a_ext_m_per_s2=a_ext, tau_s=tau, k_eff_rad_per_m=k_eff)
    theta = np.array([finite_pulse_phase(template.at(T)) for T in T_grid])
    base = 2.0 * k_eff * a_ext * T_grid**2
    slope = 2.0 * k_eff * a_ext * T_grid * tau
    solution, _, _, _ = np.linalg.lstsq(slope[:, None], theta - base, rcond=None)
    gamma = float(solution[0])
    logger.debug("fitted gamma=%.6f over %d T values (tau=%g s)", gamma, T_grid.size, tau)
    return gamma
