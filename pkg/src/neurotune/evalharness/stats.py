"""Fold aggregation and the paired t-test (own Student-t CDF)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _beta_cf(a: float, b: float, x: float, tol: float = 1e-16, max_iter: int = 10_000) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_reg(a: float, b: float, x: float, y: float | None = None) -> float:
    """Regularized incomplete beta I_x(a, b).  ``y`` may pass 1 - x when it
    is known more precisely than ``1.0 - x``."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    y = 1.0 - x if y is None else y
    if x == 0.0 or y == 0.0:
        return 0.0 if x == 0.0 else 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log(y)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, y) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0
    if t == 0:
        return 1.0
    t2 = t * t
    return min(1.0, max(0.0, betainc_reg(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2))))


def t_cdf(t: float, df: float) -> float:
    half = 0.5 * t_sf_two_sided(t, df)
    return 1.0 - half if t > 0 else half


@dataclass(frozen=True)
class StatTest:
    t: float
    df: int
    p: float
    mean_diff: float
    flag: str = ""  # "" | "degenerate" | "identical"

    def to_dict(self) -> dict:
        return {"t": self.t, "df": self.df, "p": self.p, "mean_diff": self.mean_diff, "flag": self.flag}


def paired_ttest(a, b) -> StatTest:
    """Two-sided paired t-test on matched per-fold values."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-d and of equal length")
    n = a.size
    if n < 2:
        raise ValueError("need at least two pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return StatTest(0.0, n - 1, 1.0, 0.0, "identical")
        return StatTest(math.copysign(math.inf, mean), n - 1, 0.0, mean, "degenerate")
    t = mean * math.sqrt(n) / sd
    return StatTest(t, n - 1, t_sf_two_sided(t, n - 1), mean)


@dataclass(frozen=True)
class Aggregate:
    mean: float
    std: float
    n: int
    flag: str = ""  # "single" when std is undefined

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n": self.n, "flag": self.flag}


def aggregate(values) -> Aggregate:
    """Mean and sample standard deviation (n - 1 denominator)."""
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot aggregate an empty result list")
    if v.size == 1:
        return Aggregate(float(v[0]), 0.0, 1, "single")
    return Aggregate(float(v.mean()), float(v.std(ddof=1)), int(v.size))
