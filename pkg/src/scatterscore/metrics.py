"""Agreement statistics between predicted and listener scores."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import LengthMismatch, TooFewPoints, ZeroVariance


def _pairs(predicted, actual):
    p = np.asarray(predicted, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if p.size != a.size:
        raise LengthMismatch(f"{p.size} predictions vs {a.size} targets")
    if p.size < 2:
        raise TooFewPoints(f"need at least 2 pairs, got {p.size}")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(a))):
        raise ValueError("scores must be finite")
    return p, a


def _sum(x):
    # compensated summation keeps large-n results within the oracle tolerance
    return math.fsum(x) if x.size > 10_000 else float(np.sum(x))


def mse(predicted, actual):
    p, a = _pairs(predicted, actual)
    d = p - a
    return _sum(d * d) / d.size


def pcc(predicted, actual):
    p, a = _pairs(predicted, actual)
    dp = p - _sum(p) / p.size
    da = a - _sum(a) / a.size
    sp, sa = _sum(dp * dp), _sum(da * da)
    if sp == 0.0 or sa == 0.0:
        raise ZeroVariance("Pearson correlation undefined for a constant vector")
    r = _sum(dp * da) / math.sqrt(sp * sa)
    return max(-1.0, min(1.0, r))


def srcc(predicted, actual):
    """Spearman correlation; ties share the average of their rank positions."""
    p, a = _pairs(predicted, actual)
    return pcc(rankdata(p, method="average"), rankdata(a, method="average"))


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float


def linreg_r2(x, y, eval_x=None, eval_y=None) -> LinearFit:
    """Ordinary least squares ``y ~ slope * x + intercept``.

    ``r2 = 1 - SS_res / SS_tot`` is scored on the fitting data, or on
    ``(eval_x, eval_y)`` when given; held-out scoring can go negative.
    """
    x, y = _pairs(x, y)
    mx, my = _sum(x) / x.size, _sum(y) / y.size
    dx = x - mx
    sxx = _sum(dx * dx)
    if sxx == 0.0:
        raise ZeroVariance("regressor is constant")
    slope = _sum(dx * (y - my)) / sxx
    intercept = my - slope * mx
    if eval_x is None:
        ex, ey = x, y
    else:
        ex, ey = _pairs(eval_x, eval_y)
    resid = ey - (slope * ex + intercept)
    dev = ey - _sum(ey) / ey.size
    ss_tot = _sum(dev * dev)
    if ss_tot == 0.0:
        raise ZeroVariance("evaluation targets are constant")
    return LinearFit(slope, intercept, 1.0 - _sum(resid * resid) / ss_tot)


def report(predicted, actual):
    """``{mse, pcc, srcc, n}``; correlations are None when undefined."""
    out = {"mse": mse(predicted, actual), "n": int(np.size(predicted))}
    for name, fn in (("pcc", pcc), ("srcc", srcc)):
        try:
            out[name] = fn(predicted, actual)
        except ZeroVariance:
            out[name] = None
    return out
