# src/signal_model.py
"""
Signal data model for correlated interferometer channels.

A channel is the homoscedastic fringe S = B + A cos(phi0 + theta_off) with a
constant amplitude A and a Gaussian baseline B ~ N(mu, sigma^2). Superposed
channels (an incoherent mixture of m_F states) are again fringes whose
amplitude follows from the harmonic addition theorem.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.errors import (
    DivisionDegenerateError,
    InvalidParameterError,
    PhysicalityWarning,
)

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
TWO_STATE_WEIGHT = 1.0 / SQRT2


def _require_finite(**values) -> None:
    for name, value in values.items():
        if not np.all(np.isfinite(value)):
            raise InvalidParameterError(f"{name} must be finite, got {value!r}")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SignalParams:
    """Amplitude, baseline mean and baseline noise of one channel."""

    amplitude: float
    baseline_mean: float = 0.0
    baseline_sigma: float = 0.0

    def __post_init__(self):
        _require_finite(
            amplitude=self.amplitude,
            baseline_mean=self.baseline_mean,
            baseline_sigma=self.baseline_sigma,
        )
        if self.amplitude < 0:
            raise InvalidParameterError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.baseline_sigma < 0:
            raise InvalidParameterError(
                f"baseline_sigma must be >= 0, got {self.baseline_sigma}"
            )
        if abs(self.baseline_mean) + self.amplitude > 1.0:
            warnings.warn(
                f"|baseline_mean| + amplitude = "
                f"{abs(self.baseline_mean) + self.amplitude:.4g} exceeds 1",
                PhysicalityWarning,
                stacklevel=3,
            )


@dataclass(frozen=True)
class MixtureModel:
    """Weights of the m_F = 0, +1, -1 components, common amplitude and differential phase."""

    lambda_0: float
    lambda_plus: float
    lambda_minus: float
    a0: float
    theta: float = 0.0

    def __post_init__(self):
        _require_finite(
            lambda_0=self.lambda_0,
            lambda_plus=self.lambda_plus,
            lambda_minus=self.lambda_minus,
            a0=self.a0,
            theta=self.theta,
        )
        if min(self.lambda_0, self.lambda_plus, self.lambda_minus) < 0:
            raise InvalidParameterError("mixture weights must be >= 0")
        if self.a0 < 0:
            raise InvalidParameterError(f"a0 must be >= 0, got {self.a0}")
        total = self.big_lambda
        if not (math.isclose(total, 1.0) or math.isclose(total, SQRT2)):
            logger.debug("mixture weights sum to %.6g (neither 1 nor sqrt 2)", total)

    @property
    def delta_lambda(self) -> float:
        return self.lambda_plus - self.lambda_minus

    @property
    def big_lambda(self) -> float:
        return self.lambda_0 + self.lambda_plus + self.lambda_minus

    @classmethod
    def two_state(cls, a0: float, theta: float = 0.0) -> "MixtureModel":
        """S_sum normalisation: lambda_0 = 0, lambda_+1 = lambda_-1 = 1/sqrt(2)."""
        return cls(0.0, TWO_STATE_WEIGHT, TWO_STATE_WEIGHT, a0, theta)

    @classmethod
    def from_imbalance(
        cls,
        lambda_0: float,
        delta_lambda: float,
        a0: float,
        theta: float = 0.0,
        big_lambda: float = 1.0,
    ) -> "MixtureModel":
        """Build weights from (lambda_0, delta_lambda) with a fixed total."""
        rest = big_lambda - lambda_0
        return cls(
            lambda_0,
            0.5 * (rest + delta_lambda),
            0.5 * (rest - delta_lambda),
            a0,
            theta,
        )

    def with_theta(self, theta: float) -> "MixtureModel":
        return MixtureModel(
            self.lambda_0, self.lambda_plus, self.lambda_minus, self.a0, theta
        )


@dataclass(frozen=True)
class ScanConfig:
    """Laser phase scan: P phases, R repetitions each."""

    phases: Tuple[float, ...] = (0.0,)
    repetitions: int = 1
    phase_stable: bool = True
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(float(p) for p in self.phases))
        if len(self.phases) < 1:
            raise InvalidParameterError("a scan needs at least one phase")
        if self.repetitions < 1:
            raise InvalidParameterError(
                f"repetitions must be >= 1, got {self.repetitions}"
            )
        _require_finite(phases=np.asarray(self.phases))

    @classmethod
    def evenly_spaced(
        cls,
        n_phases: int = 20,
        repetitions: int = 15,
        phase_stable: bool = True,
        seed: Optional[int] = None,
    ) -> "ScanConfig":
        if n_phases < 1:
            raise InvalidParameterError(f"n_phases must be >= 1, got {n_phases}")
        phases = 2.0 * np.pi * np.arange(n_phases) / n_phases
        return cls(tuple(phases), repetitions, phase_stable, seed)

    @property
    def n_phases(self) -> int:
        return len(self.phases)

    @property
    def n_shots(self) -> int:
        return self.n_phases * self.repetitions

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def substream(seed: Optional[int], *key: int) -> np.random.Generator:
    """Independent Philox stream for `key` under `seed`; identical for identical (seed, key)."""
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(sequence))


# ---------------------------------------------------------------------------
# Sample generation
# ---------------------------------------------------------------------------


def draw_phases(
    scan: ScanConfig, n: int, rng: Optional[np.random.Generator] = None
) -> np.ndarray:
    """
    Common fringe phases phi0 for n shots.

    Phase-stable scans step through the scan phases, each repeated
    `repetitions` times, and wrap around when n exceeds P*R. Otherwise
    phi0 is uniform on [0, 2 pi).
    """
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    rng = scan.rng() if rng is None else rng
    if scan.phase_stable:
        block = np.repeat(np.asarray(scan.phases), scan.repetitions)
        return np.resize(block, n)
    return rng.uniform(0.0, 2.0 * np.pi, size=n)


def fringe_values(
    params: SignalParams,
    phi0: np.ndarray,
    theta_off: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """S = b + A cos(phi0 + theta_off) with b ~ N(mu, sigma^2) drawn per shot."""
    _require_finite(theta_off=theta_off)
    phi0 = np.asarray(phi0, dtype=float)
    baseline = rng.normal(params.baseline_mean, params.baseline_sigma, size=phi0.shape)
    return baseline + params.amplitude * np.cos(phi0 + theta_off)


def generate_samples(
    params: SignalParams,
    theta_off: float,
    scan: ScanConfig,
    n: int,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Draw n homoscedastic fringe values; deterministic given scan.seed."""
    rng = scan.rng() if rng is None else rng
    phi0 = draw_phases(scan, n, rng)
    return fringe_values(params, phi0, theta_off, rng)


def simulate_port_counts(
    baseline_0: float,
    baseline_1: float,
    amplitude: float,
    port_sigma: float,
    phi0: np.ndarray,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Atom numbers N_0/1 = B_0/1 +- A cos(phi) in the two exit ports.

    Both ports share the amplitude (atom number is conserved) and the
    baseline noise port_sigma.
    """
    _require_finite(
        baseline_0=baseline_0,
        baseline_1=baseline_1,
        amplitude=amplitude,
        port_sigma=port_sigma,
    )
    phi0 = np.asarray(phi0, dtype=float)
    fringe = amplitude * np.cos(phi0)
    n0 = rng.normal(baseline_0, port_sigma, size=phi0.shape) + fringe
    n1 = rng.normal(baseline_1, port_sigma, size=phi0.shape) - fringe
    return n0, n1


def normalize_ports(n0, n1):
    """Normalised population difference (N0 - N1) / (N0 + N1)."""
    n0 = np.asarray(n0, dtype=float)
    n1 = np.asarray(n1, dtype=float)
    total = n0 + n1
    if np.any(total <= 0):
        raise DivisionDegenerateError("total atom number must be > 0")
    result = (n0 - n1) / total
    return float(result) if result.ndim == 0 else result


# ---------------------------------------------------------------------------
# Amplitude modulation and rotation
# ---------------------------------------------------------------------------


def superpose_cosines(
    weights: Sequence[float], phases: Sequence[float]
) -> Tuple[float, float]:
    """
    Harmonic addition: sum_i w_i cos(phi0 + theta_i) = A cos(phi0 + theta_off).

    Returns (A, theta_off) with A >= 0 and theta_off in (-pi, pi]. A fully
    cancelled sum returns theta_off = 0.
    """
    weights = np.asarray(weights, dtype=float)
    phases = np.asarray(phases, dtype=float)
    if weights.size == 0 or weights.shape != phases.shape:
        raise InvalidParameterError(
            "weights and phases must be non-empty sequences of equal length"
        )
    _require_finite(weights=weights, phases=phases)
    phasor = np.sum(weights * np.exp(1j * phases))
    amplitude = abs(phasor)
    scale = np.sum(np.abs(weights))
    if amplitude <= 8.0 * np.finfo(float).eps * max(scale, 1.0):
        return 0.0, 0.0
    offset = float(np.angle(phasor))
    if offset <= -np.pi:
        offset = np.pi
    return float(amplitude), offset


def amplitude_three_state(model: MixtureModel) -> float:
    """Collapse amplitude A0 sqrt(dl^2 sin^2(theta/2) + [l0 + (l+ + l-) cos(theta/2)]^2)."""
    half = 0.5 * model.theta
    in_phase = model.lambda_0 + (model.lambda_plus + model.lambda_minus) * math.cos(half)
    quadrature = model.delta_lambda * math.sin(half)
    return model.a0 * math.hypot(quadrature, in_phase)


def offset_phase_three_state(model: MixtureModel) -> float:
    half = 0.5 * model.theta
    in_phase = model.lambda_0 + (model.lambda_plus + model.lambda_minus) * math.cos(half)
    quadrature = model.delta_lambda * math.sin(half)
    if in_phase == 0.0 and quadrature == 0.0:
        return 0.0
    return math.atan2(quadrature, in_phase)


def three_state_terms(model: MixtureModel) -> Tuple[np.ndarray, np.ndarray]:
    """Weights and phases of the (m_F = -1, 0, +1) cosine terms, scaled by A0."""
    weights = model.a0 * np.array([model.lambda_minus, model.lambda_0, model.lambda_plus])
    phases = np.array([-0.5 * model.theta, 0.0, 0.5 * model.theta])
    return weights, phases


def rotate_bivariate(s_minus, s_plus, alpha: float):
    """Project (s_minus, s_plus) on the axis at angle alpha: s_- cos a + s_+ sin a."""
    result = np.asarray(s_minus) * math.cos(alpha) + np.asarray(s_plus) * math.sin(alpha)
    return float(result) if np.ndim(result) == 0 else result


def sum_diff(s_plus, s_minus):
    """Principal-axis channels S_sum = (S+ + S-)/sqrt2 and S_diff = (S+ - S-)/sqrt2."""
    s_plus = np.asarray(s_plus, dtype=float)
    s_minus = np.asarray(s_minus, dtype=float)
    return (s_plus + s_minus) / SQRT2, (s_plus - s_minus) / SQRT2

