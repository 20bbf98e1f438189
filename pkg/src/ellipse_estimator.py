# src/ellipse_estimator.py
"""
Ellipse-fit baseline for the differential phase of two correlated channels.

The algebraic conic

    c_plus_sq S+^2 + c0 S+ S- + c_minus_sq S-^2 + d_plus S+ + d_minus S- + d0 = 0

is fitted to the (S-, S+) scatter with the Halir-Flusser direct least-squares
method, and theta = arccos(-c0 / sqrt(4 c_plus_sq c_minus_sq)).
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Tuple

import numpy as np

from src.errors import DegenerateGeometryError, InvalidParameterError, SignConventionError

logger = logging.getLogger(__name__)

ELLIPSE_TOLERANCE = 1e-12
CLAMP_TOLERANCE = 1e-6
AXIS_TOLERANCE = 1e-6
EQUAL_AMPLITUDE_TOLERANCE = 0.05
_RANK_RCOND = 1e-12


@dataclass(frozen=True)
class ConicCoefficients:
    c_plus_sq: float
    c_minus_sq: float
    c0: float
    d_plus: float
    d_minus: float
    d0: float
    is_ellipse: bool = True

    @property
    def discriminant(self) -> float:
        """c0^2 - 4 c_plus_sq c_minus_sq (< 0 for an ellipse)."""
        return self.c0 * self.c0 - 4.0 * self.c_plus_sq * self.c_minus_sq

    def scaled(self, factor: float) -> "ConicCoefficients":
        return ConicCoefficients(
            self.c_plus_sq * factor,
            self.c_minus_sq * factor,
            self.c0 * factor,
            self.d_plus * factor,
            self.d_minus * factor,
            self.d0 * factor,
            self.is_ellipse,
        )

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# 3x3 eigenproblem
# ---------------------------------------------------------------------------


def _cubic_roots(m: np.ndarray) -> np.ndarray:
    """Real roots of det(m - x I) = 0, refined by Newton steps on the cubic."""
    tr = float(np.trace(m))
    minors = (
        m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        + m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
        + m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]
    )
    det = float(np.linalg.det(m))
    # depressed cubic t^3 + p t + q with x = t + tr/3
    p = minors - tr * tr / 3.0
    q = -2.0 * tr**3 / 27.0 + tr * minors / 3.0 - det
    disc = (0.5 * q) ** 2 + (p / 3.0) ** 3
    if p == 0.0:
        roots = np.array([np.cbrt(-q)])
    elif disc <= 0.0:
        radius = 2.0 * math.sqrt(-p / 3.0)
        arg = (3.0 * q / (2.0 * p)) * math.sqrt(-3.0 / p)
        base = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        roots = radius * np.cos(base - 2.0 * np.pi * np.arange(3) / 3.0)
    else:
        root = math.sqrt(disc)
        roots = np.array([np.cbrt(-0.5 * q + root) + np.cbrt(-0.5 * q - root)])
    roots = roots + tr / 3.0

    def poly(x):
        return ((x - tr) * x + minors) * x - det

    def dpoly(x):
        return (3.0 * x - 2.0 * tr) * x + minors

    for _ in range(3):
        slope = dpoly(roots)
        safe = np.abs(slope) > 1e-300
        roots = np.where(safe, roots - poly(roots) / np.where(safe, slope, 1.0), roots)
    return roots


def _null_vector(m: np.ndarray, value: float) -> np.ndarray:
    """Eigenvector for `value`: largest cross product of two rows of m - value I, then inverse iteration."""
    shifted = m - value * np.eye(3)
    crosses = [
        np.cross(shifted[0], shifted[1]),
        np.cross(shifted[0], shifted[2]),
        np.cross(shifted[1], shifted[2]),
    ]
    vector = max(crosses, key=np.linalg.norm)
    norm = np.linalg.norm(vector)
    if norm == 0.0:
        # every row vanishes: value has a two-dimensional eigenspace
        vector = np.array([1.0, 0.0, 0.0])
    else:
        vector = vector / norm
    eps = 1e-10 * max(1.0, abs(value), float(np.abs(m).max()))
    nudged = shifted - eps * np.eye(3)
    for _ in range(2):
        try:
            refined = np.linalg.solve(nudged, vector)
        except np.linalg.LinAlgError:
            break
        size = np.linalg.norm(refined)
        if not np.isfinite(size) or size == 0.0:
            break
        vector = refined / size
    return vector


# ---------------------------------------------------------------------------
# Fit
# ---------------------------------------------------------------------------


def _precondition(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    mx, my = float(x.mean()), float(y.mean())
    scale = math.sqrt(0.5 * float(np.mean((x - mx) ** 2 + (y - my) ** 2)))
    if not scale > 0:
        raise DegenerateGeometryError("all points coincide")
    return mx, my, scale


def _restore(a: np.ndarray, mx: float, my: float, s: float) -> np.ndarray:
    """Conic in original coordinates from the conic in u = (x - mx)/s, v = (y - my)/s."""
    A, B, C, D, E, F = a
    s2 = s * s
    return np.array(
        [
            A / s2,
            B / s2,
            C / s2,
            -2.0 * A * mx / s2 - B * my / s2 + D / s,
            -2.0 * C * my / s2 - B * mx / s2 + E / s,
            (A * mx * mx + B * mx * my + C * my * my) / s2 - (D * mx + E * my) / s + F,
        ]
    )


def fit_conic(points) -> ConicCoefficients:
    """
    Direct least-squares ellipse through (s_minus, s_plus) points.

    Points are mean-centred and isotropically scaled before the
    partitioned scatter-matrix fit; the conic is mapped back afterwards.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise InvalidParameterError("points must have shape (n, 2) as (s_minus, s_plus)")
    if points.shape[0] < 6:
        raise DegenerateGeometryError(f"need at least 6 points, got {points.shape[0]}")
    if not np.all(np.isfinite(points)):
        raise InvalidParameterError("points must be finite")
    x, y = points[:, 1], points[:, 0]
    mx, my, scale = _precondition(x, y)
    u, v = (x - mx) / scale, (y - my) / scale

    d1 = np.column_stack([u * u, u * v, v * v])
    d2 = np.column_stack([u, v, np.ones_like(u)])
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    singular = np.linalg.svd(s3, compute_uv=False)
    if singular[-1] <= _RANK_RCOND * singular[0]:
        raise DegenerateGeometryError("scatter matrix is rank deficient (collinear points)")
    t = -np.linalg.solve(s3, s2.T)
    reduced = s1 + s2 @ t
    # premultiply by the inverse of the constraint matrix [[0,0,2],[0,-1,0],[2,0,0]]
    reduced = np.vstack([reduced[2] / 2.0, -reduced[1], reduced[0] / 2.0])

    best, best_cond = None, -np.inf
    for value in _cubic_roots(reduced):
        vector = _null_vector(reduced, float(value))
        cond = 4.0 * vector[0] * vector[2] - vector[1] ** 2
        if cond > best_cond:
            best, best_cond = vector, cond
    if best_cond <= ELLIPSE_TOLERANCE:
        logger.debug("selected conic violates the ellipse constraint (%.3g)", best_cond)

    conic = _restore(np.concatenate([best, t @ best]), mx, my, scale)
    if conic[0] < 0:
        conic = -conic
    conic = conic / np.linalg.norm(conic)
    A, B, C, D, E, F = (float(c) for c in conic)
    is_ellipse = B * B - 4.0 * A * C < -ELLIPSE_TOLERANCE and C > 0
    return ConicCoefficients(A, C, B, D, E, F, bool(is_ellipse))


def theta_from_conic(c: ConicCoefficients) -> float:
    """theta in [0, pi] from the cross term; the arccos argument is clamped."""
    if not (c.c_plus_sq > 0 and c.c_minus_sq > 0):
        raise SignConventionError("quadratic coefficients must both be > 0")
    arg = -c.c0 / math.sqrt(4.0 * c.c_plus_sq * c.c_minus_sq)
    if abs(arg) > 1.0 + CLAMP_TOLERANCE:
        logger.debug("degenerate conic, arccos argument %.6f clamped", arg)
    return math.acos(max(-1.0, min(1.0, arg)))


def ellipse_theta(s_minus, s_plus) -> float:
    """fit_conic + theta_from_conic on two channel arrays."""
    return theta_from_conic(fit_conic(np.column_stack([s_minus, s_plus])))


# ---------------------------------------------------------------------------
# Principal axes
# ---------------------------------------------------------------------------


class PrincipalAxes(NamedTuple):
    major: np.ndarray
    minor: np.ndarray
    favorable_channel: str
    ambiguous: bool
    equal_amplitude: bool


def principal_axes(c: ConicCoefficients) -> PrincipalAxes:
    """
    Diagonal / anti-diagonal axes of an equal-amplitude ellipse.

    The minor axis lies along (1, sgn c0)/sqrt(2); its projection (S_sum for
    c0 > 0, S_diff otherwise) is the favorable PEAC channel.
    """
    scale = math.sqrt(abs(c.c_plus_sq * c.c_minus_sq))
    ambiguous = abs(c.c0) <= AXIS_TOLERANCE * scale
    spread = c.c_plus_sq + c.c_minus_sq
    equal_amplitude = (
        spread > 0 and abs(c.c_plus_sq - c.c_minus_sq) / spread <= EQUAL_AMPLITUDE_TOLERANCE
    )
    if not equal_amplitude:
        logger.warning("unequal channel amplitudes; diagonal principal axes are approximate")
    sign = 1.0 if c.c0 >= 0 else -1.0
    minor = np.array([1.0, sign]) / math.sqrt(2.0)
    major = np.array([1.0, -sign]) / math.sqrt(2.0)
    favorable = "sum" if sign > 0 else "diff"
    return PrincipalAxes(major, minor, favorable, bool(ambiguous), bool(equal_amplitude))
