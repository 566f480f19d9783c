"""Power-law exponent fits and expected-regime classification."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData


@dataclass(frozen=True)
class RateFit:
    eps: tuple
    log_counts: tuple
    slope: float
    intercept: float
    r_squared: float
    label: str = ""


def fit_exponent(points, label: str = "") -> RateFit:
    """Least-squares slope of log(log-count) against log(1/eps).

    points: iterable of (eps, log_count) with eps strictly decreasing and
    positive log-counts; needs at least 4 points.
    """
    pts = [(float(e), float(c)) for e, c in points]
    if len(pts) < 4:
        raise InsufficientData("need at least 4 points for a rate fit")
    eps = np.array([e for e, _ in pts])
    cnt = np.array([c for _, c in pts])
    if np.any(np.diff(eps) >= 0):
        raise InsufficientData("eps values must be strictly decreasing")
    if np.any(cnt <= 0):
        raise InsufficientData("log-counts must be positive")
    x = np.log(1.0 / eps)
    y = np.log(cnt)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(
        eps=tuple(eps.tolist()), log_counts=tuple(cnt.tolist()),
        slope=float(slope), intercept=float(intercept), r_squared=r2, label=label,
    )


@dataclass(frozen=True)
class RegimeRecord:
    d: int
    p: float
    ball_exponent: float
    ball_log_power: float
    polytope_exponent: float
    regime: str


def classify_regime(d: int, p: float) -> RegimeRecord:
    """Expected entropy-growth exponents for the ball and for polytopes."""
    if d < 1 or p < 1:
        raise ValueError("need d >= 1 and p >= 1")
    poly = d / 2.0
    if d == 1:
        return RegimeRecord(d=d, p=p, ball_exponent=poly, ball_log_power=0.0,
                            polytope_exponent=poly, regime="polytope-only")
    crit = d / (d - 1.0)
    if p > crit:
        return RegimeRecord(d=d, p=p, ball_exponent=(d - 1) * p / 2.0, ball_log_power=0.0,
                            polytope_exponent=poly, regime="cap-dominated")
    if p == crit:
        return RegimeRecord(d=d, p=p, ball_exponent=d / 2.0, ball_log_power=(d + 1) / 2.0,
                            polytope_exponent=poly, regime="critical")
    return RegimeRecord(d=d, p=p, ball_exponent=d / 2.0, ball_log_power=0.0,
                        polytope_exponent=poly, regime="cube-dominated")
