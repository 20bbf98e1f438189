# src/peac_estimator.py
"""
Phase estimation from amplitude collapse (PEAC).

Pipeline per interrogation time T:
  1. bin the fringe values (square-root rule),
  2. fit the arcsine (x) Gaussian density to the bin densities,
  3. invert the amplitude-collapse law for the differential phase.
Across T, the collapse curve A_all(T) is fitted for the acceleration and
the mixture weights.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq, least_squares, minimize
from scipy.special import i0e, i1e

from src.errors import (
    BranchDegenerateError,
    DegenerateRangeError,
    FitFailureError,
    IncompleteDatasetError,
    InconsistentAmplitudeError,
    InvalidParameterError,
    SingularParameterError,
    UndefinedPhaseError,
)
from src.pulse_physics import PulseConfig, closed_form_phase
from src.signal_model import SQRT2, MixtureModel, sum_diff

logger = logging.getLogger(__name__)

MERGE_THRESHOLD = 1.7777
GUESS_FRACTION = 0.25
PEAK_TOLERANCE = 2.0
PDF_ORDER = 64
PANEL_RATIO = 8.0
MAX_PANELS = 4096
CLAMP_TOLERANCE = 1e-6
RADICAND_TOLERANCE = 1e-9
_CHUNK_ELEMENTS = 2_000_000


# ---------------------------------------------------------------------------
# Histogram
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    total: int
    sample_mean: float

    @property
    def nbins(self) -> int:
        return self.counts.size

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def bin_width(self) -> float:
        return float(self.widths.mean())

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.total * self.widths)


def sqrt_rule_bins(n: int) -> int:
    """Square-root rule as numpy's 'sqrt' estimator applies it: ceil(sqrt(n))."""
    return max(1, math.ceil(math.sqrt(n) - 1e-9))


def build_histogram(values: Sequence[float], nbins: Optional[int] = None) -> Histogram:
    """Equal-width bins spanning [min, max] of the data."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size < 2 or not np.all(np.isfinite(values)):
        raise InvalidParameterError("need at least two finite values to bin")
    lo, hi = float(values.min()), float(values.max())
    if not hi > lo:
        raise DegenerateRangeError("all values are identical; the bin range is empty")
    nbins = sqrt_rule_bins(values.size) if nbins is None else int(nbins)
    if nbins < 1:
        raise InvalidParameterError(f"nbins must be >= 1, got {nbins}")
    counts, edges = np.histogram(values, bins=nbins, range=(lo, hi))
    return Histogram(edges, counts, int(values.size), float(values.mean()))


# ---------------------------------------------------------------------------
# Probability density
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PdfParams:
    amplitude: float
    mean: float
    sigma: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.amplitude, self.mean, self.sigma)):
            raise InvalidParameterError("PDF parameters must be finite")
        if self.amplitude < 0 or self.sigma < 0:
            raise InvalidParameterError("amplitude and sigma must be >= 0")

    @property
    def double_peak(self) -> bool:
        return self.sigma > 0 and self.amplitude / self.sigma > MERGE_THRESHOLD

    def as_array(self) -> np.ndarray:
        return np.array([self.amplitude, self.mean, self.sigma])

    def to_dict(self) -> dict:
        return {"amplitude": self.amplitude, "mean": self.mean, "sigma": self.sigma}


@lru_cache(maxsize=8)
def _legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    return leggauss(order)


def _quadrature_nodes(ratio: float, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Composite Gauss-Legendre nodes on u in [-pi/2, pi/2].

    The Gaussian factor is narrowest at u = 0 with width sigma/A in u, so
    panel widths scale with sigma/A.
    """
    panels = int(min(MAX_PANELS, max(1, math.ceil(ratio / PANEL_RATIO))))
    x, w = _legendre(order)
    edges = np.linspace(-0.5 * np.pi, 0.5 * np.pi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def pdf_eval(s, p: PdfParams, order: int = PDF_ORDER):
    """
    Density of S = mu + A sin(u) + N(0, sigma^2) with u uniform.

    f(s) = 1/(pi sigma sqrt(2 pi)) * int_{-pi/2}^{pi/2} exp(-(s - A sin u - mu)^2 / (2 sigma^2)) du
    """
    if not p.sigma > 0:
        raise SingularParameterError("sigma must be > 0; use arcsine_pdf for sigma = 0")
    s = np.asarray(s, dtype=float)
    flat = s.ravel()
    nodes, weights = _quadrature_nodes(p.amplitude / p.sigma, order)
    offsets = p.mean + p.amplitude * np.sin(nodes)
    norm = 1.0 / (np.pi * p.sigma * math.sqrt(2.0 * np.pi))
    out = np.empty_like(flat)
    chunk = max(1, _CHUNK_ELEMENTS // nodes.size)
    for start in range(0, flat.size, chunk):
        z = (flat[start : start + chunk, None] - offsets[None, :]) / p.sigma
        out[start : start + chunk] = np.exp(-0.5 * z * z) @ weights
    out *= norm
    return float(out[0]) if s.ndim == 0 else out.reshape(s.shape)


def arcsine_pdf(s, amplitude: float, mean: float = 0.0):
    """sigma -> 0 limit: 1 / (pi sqrt(A^2 - (s - mu)^2)) inside (-A, A), else 0."""
    s = np.asarray(s, dtype=float)
    x = s - mean
    inside = np.abs(x) < amplitude
    safe = np.where(inside, amplitude * amplitude - x * x, 1.0)
    value = np.where(inside, 1.0 / (np.pi * np.sqrt(safe)), 0.0)
    return float(value) if value.ndim == 0 else value


def count_modes(p: PdfParams, n_grid: int = 4001) -> int:
    """Number of local maxima of the density on a grid covering mu +- (A + 6 sigma)."""
    reach = p.amplitude + 6.0 * p.sigma
    grid = np.linspace(p.mean - reach, p.mean + reach, n_grid)
    f = pdf_eval(grid, p)
    peaks = (f[1:-1] > f[:-2]) & (f[1:-1] >= f[2:])
    return int(np.count_nonzero(peaks))


def measure_merge_threshold(lo: float = 1.5, hi: float = 2.1, tol: float = 1e-4) -> float:
    """A/sigma at which the density turns from two modes into one (bisection on count_modes)."""
    if count_modes(PdfParams(lo, 0.0, 1.0)) != 1 or count_modes(PdfParams(hi, 0.0, 1.0)) != 2:
        raise InvalidParameterError(f"[{lo}, {hi}] does not bracket the mode transition")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if count_modes(PdfParams(mid, 0.0, 1.0)) >= 2:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def merge_threshold_curvature() -> float:
    """
    A/sigma where the curvature of the density at its centre vanishes.

    With z = (A/sigma)^2 / 2 the curvature is proportional to
    z (I0(z/2) - I1(z/2)) - I0(z/2).
    """

    def curvature(ratio: float) -> float:
        z = 0.5 * ratio * ratio
        y = 0.5 * z
        return z * (i0e(y) - i1e(y)) - i0e(y)

    return float(brentq(curvature, 1.0, 3.0, xtol=1e-12))


# ---------------------------------------------------------------------------
# Initial guesses
# ---------------------------------------------------------------------------


class InitialGuess(NamedTuple):
    params: PdfParams
    low_confidence: bool


def _crossing(h: Histogram, start: int, step: int, level: float) -> float:
    """
    Position where the counts first fall to `level` walking from bin `start`
    in direction `step`, interpolated linearly between bin centres. The
    count beyond the data range is 0, anchored at the outer bin edge.
    """
    counts = h.counts.astype(float)
    centers = h.centers
    outer_edge = float(h.bin_edges[-1] if step > 0 else h.bin_edges[0])
    x_prev, c_prev = float(centers[start]), counts[start]
    j = start + step
    while True:
        if 0 <= j < counts.size:
            x, c = float(centers[j]), counts[j]
        else:
            x, c = outer_edge, 0.0
        if c <= level:
            return x_prev + (c_prev - level) / (c_prev - c) * (x - x_prev)
        x_prev, c_prev = x, c
        j += step


def _settled_peak(counts: np.ndarray, peak: int, step: int, level: float) -> int:
    """
    Outermost non-edge bin, contiguous with the maximum in direction `step`,
    whose count stays above `level` and within PEAK_TOLERANCE Poisson
    deviations of the maximum.
    """
    top = float(counts[peak])
    j = peak
    while 0 < j + step < counts.size - 1:
        c = float(counts[j + step])
        if c <= level or top - c > PEAK_TOLERANCE * math.sqrt(top + c):
            break
        j += step
    return j


def initial_guesses(h: Histogram, k: float = GUESS_FRACTION) -> InitialGuess:
    """
    Mean from the data; sigma from the outward drop of the highest bin to
    fraction k of its count, sigma = |s_max - s_k| sqrt(-1 / (2 ln k));
    amplitude = |s_max - mu| + sigma.

    A maximum in an edge bin is searched inward and flagged low-confidence.
    """
    if not 0.0 < k < 1.0:
        raise InvalidParameterError(f"k must lie in (0, 1), got {k}")
    counts = h.counts
    peak = int(np.argmax(counts))
    mu = h.sample_mean
    outward = 1 if float(h.centers[peak]) >= mu else -1
    level = k * float(counts[peak])

    low_confidence = h.nbins > 1 and peak == (h.nbins - 1 if outward > 0 else 0)
    if low_confidence:
        logger.debug("peak at the histogram edge; inward initial guess")
        s_max = float(h.centers[peak])
        s_k = _crossing(h, peak, -outward, level)
    else:
        settled = _settled_peak(counts, peak, outward, level)
        s_max = float(h.centers[settled])
        s_k = _crossing(h, settled, outward, level)
    sigma = abs(s_max - s_k) * math.sqrt(-1.0 / (2.0 * math.log(k)))
    amplitude = abs(s_max - mu) + sigma
    return InitialGuess(PdfParams(amplitude, mu, sigma), low_confidence)


# ---------------------------------------------------------------------------
# Histogram fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PdfFit:
    params: PdfParams
    converged: bool
    residual: float
    nfev: int = 0
    fallback_used: bool = False
    at_bound: bool = False

    def to_dict(self) -> dict:
        return {
            **self.params.to_dict(),
            "converged": self.converged,
            "residual": self.residual,
        }


def _central_jacobian(fun, x, lb, ub):
    """Central differences, step max(1e-6, 1e-4 |x_j|), one-sided at active bounds."""
    x = np.asarray(x, dtype=float)
    f0 = None
    columns = []
    for j in range(x.size):
        h = max(1e-6, 1e-4 * abs(x[j]))
        up, down = x.copy(), x.copy()
        if x[j] + h > ub[j]:
            f0 = fun(x) if f0 is None else f0
            down[j] -= h
            columns.append((f0 - fun(down)) / h)
        elif x[j] - h < lb[j]:
            f0 = fun(x) if f0 is None else f0
            up[j] += h
            columns.append((fun(up) - f0) / h)
        else:
            up[j] += h
            down[j] -= h
            columns.append((fun(up) - fun(down)) / (2.0 * h))
    return np.column_stack(columns)


def fit_pdf(
    h: Histogram,
    guess: PdfParams,
    bounds: Optional[Tuple[float, float]] = None,
    max_nfev: int = 300,
) -> PdfFit:
    """
    Bounded least squares of pdf_eval against the bin-centre densities.

    Trust-region reflective first; on a stall, a Nelder-Mead restart on the
    projected parameters. `bounds` restricts the amplitude only.
    """
    a_lo, a_hi = (0.0, np.inf) if bounds is None else (float(bounds[0]), float(bounds[1]))
    if a_lo < 0 or a_hi < a_lo:
        raise InvalidParameterError(f"invalid amplitude bounds {bounds!r}")
    if a_hi - a_lo < 1e-12:
        a_hi = a_lo + 1e-12
    edges = h.bin_edges
    span = float(edges[-1] - edges[0])
    lb = np.array([a_lo, edges[0] - span, 1e-3 * h.bin_width])
    ub = np.array([a_hi, edges[-1] + span, np.inf])
    x0 = np.clip(guess.as_array(), lb, np.where(np.isfinite(ub), ub, lb + 10.0 * span))

    centers = h.centers
    target = h.density

    def residuals(theta):
        theta = np.clip(theta, lb, ub)
        return pdf_eval(centers, PdfParams(*theta)) - target

    def jacobian(theta):
        return _central_jacobian(residuals, theta, lb, ub)

    result = least_squares(
        residuals,
        x0,
        jac=jacobian,
        bounds=(lb, ub),
        method="trf",
        x_scale="jac",
        xtol=1e-10,
        ftol=1e-10,
        max_nfev=max_nfev,
    )
    best = np.clip(result.x, lb, ub)
    best_cost = float(np.sum(residuals(best) ** 2))
    converged = result.status > 0
    fallback_used = False
    nfev = int(result.nfev)

    if not converged:
        logger.debug("trust-region fit stalled (%s); Nelder-Mead restart", result.message)
        fallback_used = True
        restart = minimize(
            lambda theta: float(np.sum(residuals(theta) ** 2)),
            best,
            method="Nelder-Mead",
            bounds=list(zip(lb, ub)),
            options={"xatol": 1e-9, "fatol": 1e-14, "maxiter": 4000},
        )
        nfev += int(restart.nfev)
        candidate = np.clip(restart.x, lb, ub)
        candidate_cost = float(np.sum(residuals(candidate) ** 2))
        if candidate_cost <= best_cost:
            best, best_cost = candidate, candidate_cost
        converged = bool(restart.success)

    params = PdfParams(*best)
    if not converged:
        raise FitFailureError(
            "histogram fit did not converge",
            best_params=params,
            diagnostics={"nfev": nfev, "residual": best_cost},
        )
    at_bound = bool(best[0] <= a_lo + 1e-9 or best[0] >= a_hi - 1e-9)
    return PdfFit(params, True, best_cost, nfev, fallback_used, at_bound)


def fit_histogram(values: Sequence[float], nbins: Optional[int] = None, bounds=None) -> PdfFit:
    """Bin, guess and fit one channel."""
    h = build_histogram(values, nbins)
    guess = initial_guesses(h).params
    if bounds is not None:
        guess = PdfParams(
            float(np.clip(guess.amplitude, bounds[0], bounds[1])), guess.mean, guess.sigma
        )
    return fit_pdf(h, guess, bounds)


# ---------------------------------------------------------------------------
# State-selective channel suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelSuiteFit:
    plus: PdfFit
    minus: PdfFit
    sum: PdfFit
    diff: PdfFit
    a0: float

    def to_dict(self) -> dict:
        return {
            "a0": self.a0,
            "plus": self.plus.to_dict(),
            "minus": self.minus.to_dict(),
            "sum": self.sum.to_dict(),
            "diff": self.diff.to_dict(),
        }


def fit_channel_suite(
    channels: Mapping[str, np.ndarray], nbins: Optional[int] = None
) -> ChannelSuiteFit:
    """
    Fit S+1 and S-1 freely, set A0 to the mean fitted amplitude, then fit
    S_sum and S_diff with amplitudes bounded to [0, sqrt(2) A0].
    """
    missing = [name for name in ("plus", "minus") if name not in channels]
    if missing:
        raise IncompleteDatasetError(f"missing channel(s): {', '.join(missing)}")
    plus = np.asarray(channels["plus"], dtype=float)
    minus = np.asarray(channels["minus"], dtype=float)

    hist_plus = build_histogram(plus, nbins)
    hist_minus = build_histogram(minus, nbins)
    fit_plus = fit_pdf(hist_plus, initial_guesses(hist_plus).params)
    fit_minus = fit_pdf(hist_minus, initial_guesses(hist_minus).params)
    a0 = 0.5 * (fit_plus.params.amplitude + fit_minus.params.amplitude)

    if "sum" in channels and "diff" in channels:
        s_sum = np.asarray(channels["sum"], dtype=float)
        s_diff = np.asarray(channels["diff"], dtype=float)
    else:
        s_sum, s_diff = sum_diff(plus, minus)

    sigma_mean = 0.5 * (fit_plus.params.sigma + fit_minus.params.sigma)
    narrowest = min(hist_plus.bin_width, hist_minus.bin_width)
    upper = SQRT2 * a0

    fits = {}
    for name, values in (("sum", s_sum), ("diff", s_diff)):
        h = build_histogram(values, nbins)
        guess = initial_guesses(h).params
        sigma0 = sigma_mean if sigma_mean >= narrowest else guess.sigma
        start = PdfParams(
            float(np.clip(guess.amplitude, 0.0, upper)), h.sample_mean, sigma0
        )
        fits[name] = fit_pdf(h, start, bounds=(0.0, upper))
    return ChannelSuiteFit(fit_plus, fit_minus, fits["sum"], fits["diff"], a0)


# ---------------------------------------------------------------------------
# Phase reconstruction
# ---------------------------------------------------------------------------


def _clamped_ratio(amplitude: float, a0: float) -> float:
    if not a0 > 0:
        raise UndefinedPhaseError("a0 must be > 0 to reconstruct a phase")
    if amplitude < 0:
        raise InvalidParameterError(f"amplitude must be >= 0, got {amplitude}")
    ratio = amplitude / (SQRT2 * a0)
    if ratio > 1.0 + CLAMP_TOLERANCE:
        raise InconsistentAmplitudeError(
            f"amplitude ratio {ratio:.8f} exceeds 1 beyond tolerance"
        )
    return min(ratio, 1.0)


def reconstruct_theta_two_state(a_sum: float, a0: float) -> float:
    """theta = 2 arccos(A_sum / (sqrt(2) A0)), in [0, pi]."""
    return 2.0 * math.acos(_clamped_ratio(a_sum, a0))


def reconstruct_theta_from_diff(a_diff: float, a0: float) -> float:
    """theta = 2 arcsin(A_diff / (sqrt(2) A0)), in [0, pi]."""
    return 2.0 * math.asin(_clamped_ratio(a_diff, a0))


class ThreeStateBranches(NamedTuple):
    theta_plus: float
    theta_minus: float


def reconstruct_theta_three_state(a_all: float, model: MixtureModel) -> ThreeStateBranches:
    """
    Both solutions of the three-state collapse law for cos(theta/2).

    Uses the weights and A0 of `model` (its theta is ignored). A branch whose
    cos(theta/2) falls outside [-1, 1] is returned as NaN.
    """
    if not model.a0 > 0:
        raise UndefinedPhaseError("a0 must be > 0 to reconstruct a phase")
    lam0 = model.lambda_0
    big = model.big_lambda
    rest = big - lam0
    dl2 = model.delta_lambda**2
    denom = dl2 - rest * rest
    if abs(denom) <= 1e-12 * max(1.0, big * big):
        raise BranchDegenerateError(
            "collapse amplitude carries no phase information for these weights"
        )
    r2 = (a_all / model.a0) ** 2
    centre = lam0 * rest / denom
    radicand = dl2 * (dl2 + 2.0 * big * lam0 - big * big) / denom**2 - r2 / denom
    if radicand < 0:
        if radicand < -RADICAND_TOLERANCE:
            raise InconsistentAmplitudeError(
                f"amplitude {a_all:.6g} is unreachable for these weights"
            )
        radicand = 0.0
    root = math.sqrt(radicand)
    branches = []
    for cos_half in (centre + root, centre - root):
        if abs(cos_half) > 1.0 + CLAMP_TOLERANCE:
            branches.append(float("nan"))
        else:
            branches.append(2.0 * math.acos(max(-1.0, min(1.0, cos_half))))
    return ThreeStateBranches(*branches)


def nearest_branch(wrapped: float, target: float) -> float:
    """Member of {2 pi m +- wrapped} closest to target; ties go to the lower candidate."""
    candidates = []
    for sign in (1.0, -1.0):
        m = round((target - sign * wrapped) / (2.0 * np.pi))
        candidates.append(2.0 * np.pi * m + sign * wrapped)
    low, high = sorted(candidates)
    tie = 1e-12 * max(1.0, abs(target))
    if abs(low - target) <= abs(high - target) + tie:
        return float(low)
    return float(high)


def unwrap(series: Sequence[float], order: int = 1) -> np.ndarray:
    """
    Resolve the arccos ambiguity of a phase series ordered by T.

    Every value is folded into [0, pi]; each point then takes the branch
    2 pi m +- theta closest to a polynomial extrapolation of the points
    already fixed (order 0: previous point, 1: linear, 2: quadratic).
    The first point stays on [0, pi].
    """
    if order not in (0, 1, 2):
        raise InvalidParameterError(f"order must be 0, 1 or 2, got {order}")
    values = np.asarray(series, dtype=float)
    if values.size == 0:
        return values.copy()
    wrapped = np.abs(np.angle(np.exp(1j * values)))
    out = np.empty_like(wrapped)
    out[0] = wrapped[0]
    for k in range(1, values.size):
        out[k] = nearest_branch(wrapped[k], _extrapolate(out[:k], order))
    return out


def _extrapolate(fixed: np.ndarray, order: int) -> float:
    """Next value of a polynomial through the last min(order, n - 1) + 1 points."""
    usable = min(order, fixed.size - 1)
    if usable == 0:
        return float(fixed[-1])
    if usable == 1:
        return float(2.0 * fixed[-1] - fixed[-2])
    return float(3.0 * fixed[-1] - 3.0 * fixed[-2] + fixed[-3])


def _nearest_of(values: Sequence[float], period: float, target: float) -> float:
    """Member of {period m +- v : v in values} closest to target; ties go low."""
    candidates = sorted(
        period * round((target - s * v) / period) + s * v for v in values for s in (1.0, -1.0)
    )
    tie = 1e-12 * max(1.0, abs(target))
    best = candidates[0]
    for candidate in candidates[1:]:
        if abs(candidate - target) < abs(best - target) - tie:
            best = candidate
    return float(best)


def _extrapolate_at(xs: Sequence[float], ys: Sequence[float], order: int, x_next: float) -> float:
    """Lagrange polynomial through the last min(order, n - 1) + 1 points, evaluated at x_next."""
    usable = min(order, len(ys) - 1) + 1
    xs, ys = xs[-usable:], ys[-usable:]
    total = 0.0
    for i in range(usable):
        weight = 1.0
        for j in range(usable):
            if j != i:
                weight *= (x_next - xs[j]) / (xs[i] - xs[j])
        total += weight * ys[i]
    return float(total)


def unwrap_three_state(
    branches: Sequence[ThreeStateBranches],
    order: int = 1,
    start: Optional[float] = None,
    times: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """
    Continuous phase series from per-T three-state branch pairs.

    The collapse law depends on cos(theta/2) only, so each point offers
    +-b + 4 pi m for both branches b. The first usable point takes the
    candidate nearest `start` (default: its smaller branch); later points
    the candidate nearest the polynomial extrapolation of the points already
    fixed, taken over `times` (default: the point index) so skipped points
    widen the step. Points without a real branch stay NaN.
    """
    if order not in (0, 1, 2):
        raise InvalidParameterError(f"order must be 0, 1 or 2, got {order}")
    if times is not None and len(times) != len(branches):
        raise InvalidParameterError("times and branches must have the same length")
    abscissa = [float(t) for t in times] if times is not None else [float(k) for k in range(len(branches))]
    out = np.full(len(branches), np.nan)
    fixed_x: list = []
    fixed_y: list = []
    for k, pair in enumerate(branches):
        values = [float(b) for b in pair if not math.isnan(b)]
        if not values:
            continue
        if not fixed_y:
            target = min(values) if start is None else float(start)
        else:
            target = _extrapolate_at(fixed_x, fixed_y, order, abscissa[k])
        out[k] = _nearest_of(values, 4.0 * np.pi, target)
        fixed_x.append(abscissa[k])
        fixed_y.append(out[k])
    return out


# ---------------------------------------------------------------------------
# Collapse curve
# ---------------------------------------------------------------------------


def collapse_amplitude(T, a_ext, lambda0, delta_lambda, a0, template: PulseConfig):
    """A_all(T) of the non-state-selective signal with the weights summing to 1."""
    theta = closed_form_phase(
        T, a_ext, template.tau_s, template.k_eff_rad_per_m, template.gamma
    )
    half = 0.5 * theta
    return a0 * np.hypot(delta_lambda * np.sin(half), lambda0 + (1.0 - lambda0) * np.cos(half))


@dataclass
class CollapseFitResult:
    a_ext: float
    lambda_0: float
    delta_lambda: float
    a0: float
    converged: bool
    residual: float
    stderr: dict = field(default_factory=dict)
    covariance: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {
            "a_ext_m_per_s2": self.a_ext,
            "lambda0": self.lambda_0,
            "delta_lambda": self.delta_lambda,
            "a0": self.a0,
            "converged": self.converged,
            "residual": self.residual,
            "stderr": dict(self.stderr),
        }


COLLAPSE_PARAMETERS = ("a_ext_m_per_s2", "lambda0", "delta_lambda", "a0")


def fit_collapse_curve(
    T_grid: Sequence[float],
    amplitudes: Sequence[float],
    template: PulseConfig,
    a_ext_grid: Optional[Sequence[float]] = None,
) -> CollapseFitResult:
    """
    Least squares of the collapse law (with the closed-form theta(T)) over
    (a_ext, lambda_0, delta_lambda, A0).

    The amplitude oscillates in a_ext, so a grid over a_ext (default
    0.5..1.5 x template.a_ext) seeds the full fit.
    """
    T_grid = np.asarray(T_grid, dtype=float)
    amplitudes = np.asarray(amplitudes, dtype=float)
    if T_grid.shape != amplitudes.shape or T_grid.size < len(COLLAPSE_PARAMETERS):
        raise InvalidParameterError(
            "collapse fit needs matching T/amplitude arrays with at least 4 points"
        )
    if np.unique(T_grid).size < 5:
        logger.warning("collapse fit with fewer than 5 distinct T values")
    if a_ext_grid is None:
        if not template.a_ext_m_per_s2 > 0:
            raise InvalidParameterError("template a_ext must be > 0 to seed the fit")
        a_ext_grid = template.a_ext_m_per_s2 * np.linspace(0.5, 1.5, 201)

    start = np.array([0.4, 0.1, float(amplitudes.max())])
    inner_lb, inner_ub = np.zeros(3), np.array([1.0, 1.0, np.inf])
    seed, seed_cost = None, np.inf
    for a_ext in a_ext_grid:
        inner = least_squares(
            lambda p, a=a_ext: collapse_amplitude(T_grid, a, *p, template) - amplitudes,
            start,
            bounds=(inner_lb, inner_ub),
            method="trf",
            max_nfev=60,
        )
        if inner.cost < seed_cost:
            seed, seed_cost = np.concatenate([[a_ext], inner.x]), inner.cost

    def residuals(p):
        return collapse_amplitude(T_grid, *p, template) - amplitudes

    lb = np.array([0.0, 0.0, 0.0, 0.0])
    ub = np.array([np.inf, 1.0, 1.0, np.inf])
    result = least_squares(
        residuals,
        seed,
        bounds=(lb, ub),
        method="trf",
        jac="3-point",
        x_scale="jac",
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
        max_nfev=4000,
    )
    if result.status <= 0:
        raise FitFailureError(
            f"collapse-curve fit failed: {result.message}",
            best_params=dict(zip(COLLAPSE_PARAMETERS, result.x)),
            diagnostics={"nfev": result.nfev, "cost": result.cost},
        )

    dof = T_grid.size - result.x.size
    covariance = None
    stderr = {}
    if dof > 0:
        s2 = 2.0 * result.cost / dof
        covariance = np.linalg.pinv(result.jac.T @ result.jac) * s2
        stderr = dict(zip(COLLAPSE_PARAMETERS, np.sqrt(np.abs(np.diag(covariance)))))
    a_ext, lambda0, delta_lambda, a0 = (float(v) for v in result.x)
    logger.debug("collapse fit a_ext=%.6g lambda0=%.4f dl=%.4f a0=%.4f", a_ext, lambda0, delta_lambda, a0)
    return CollapseFitResult(
        a_ext,
        lambda0,
        delta_lambda,
        a0,
        True,
        float(2.0 * result.cost),
        {k: float(v) for k, v in stderr.items()},
        covariance,
    )
