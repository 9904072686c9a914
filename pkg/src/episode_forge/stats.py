"""Paired-difference t-test, 95% confidence intervals, and chi-square fit tests.

The t and chi-square tail probabilities are computed from scratch via the
regularized incomplete beta / gamma functions (continued-fraction and series
evaluations), so the package needs no stats dependency and the values can be
checked against standard tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput

_FPMIN = 1e-300
_EPS = 3e-16
_MAXIT = 300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (Lentz's method)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, dof: int) -> float:
    """Two-sided tail probability of Student's t with ``dof`` degrees of freedom."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    if math.isinf(t):
        return 0.0
    return reg_inc_beta(dof / 2.0, 0.5, dof / (dof + t * t))


def t_cdf(t: float, dof: int) -> float:
    p = 0.5 * t_two_sided_p(abs(t), dof)
    return 1.0 - p if t >= 0 else p


def t_quantile(q: float, dof: int) -> float:
    """Inverse CDF of Student's t, by bisection on ``t_cdf``."""
    if not 0.0 < q < 1.0:
        raise ValueError("quantile level must be in (0, 1)")
    if q == 0.5:
        return 0.0
    if q < 0.5:
        return -t_quantile(1.0 - q, dof)
    hi = 1.0
    while t_cdf(hi, dof) < q:
        hi *= 2.0
        if hi > 1e18:
            break
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, dof) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    dof: int
    degenerate: bool = False


def paired_t_test(a, b) -> TTestResult:
    """Paired-difference t test on two per-task metric lists aligned by index.

    t = mean(d) / (sd(d) / sqrt(n)) with d = a - b and dof = n - 1; p is the
    two-sided tail. When every difference is zero the result is (t=0, p=1).
    When the differences are a nonzero constant the sample sd is zero and the
    test degenerates; this is reported as p -> 0 with ``degenerate=True``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be equal-length 1-D sequences")
    n = a.size
    if n < 2:
        raise EmptyInput("paired t-test needs at least two pairs")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("paired samples must be finite")
    d = a - b
    dof = n - 1
    if np.all(d == 0.0):
        return TTestResult(t=0.0, p=1.0, dof=dof)
    sd = float(d.std(ddof=1))
    mean = float(d.mean())
    if sd == 0.0:
        return TTestResult(t=math.copysign(math.inf, mean), p=0.0, dof=dof, degenerate=True)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t=t, p=t_two_sided_p(t, dof), dof=dof)


def mean_ci95(xs) -> tuple[float, float]:
    """Sample mean and the halfwidth of its 95% confidence interval."""
    xs = np.asarray(xs, dtype=float)
    n = xs.size
    if n < 2:
        raise EmptyInput("confidence interval needs at least two values")
    sd = float(xs.std(ddof=1))
    halfwidth = t_quantile(0.975, n - 1) * sd / math.sqrt(n)
    return float(xs.mean()), halfwidth


def _gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) (series / continued fraction)."""
    if x < 0.0 or a <= 0.0:
        raise ValueError("invalid incomplete gamma arguments")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        # series expansion
        ap = a
        term = total = 1.0 / a
        for _ in range(_MAXIT):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                break
        return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    # continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAXIT + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    q = math.exp(-x + a * math.log(x) - math.lgamma(a)) * h
    return 1.0 - q


def chi2_sf(x: float, dof: int) -> float:
    """Upper tail probability of the chi-square distribution."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    if x <= 0.0:
        return 1.0
    return 1.0 - _gamma_p(dof / 2.0, x / 2.0)


def chi_square_gof(counts, probs) -> tuple[float, float]:
    """Pearson goodness-of-fit statistic and p-value.

    ``counts`` are observed category counts, ``probs`` the model category
    probabilities (must sum to ~1). dof = number of categories - 1.
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if counts.shape != probs.shape:
        raise ValueError("counts and probs must align")
    expected = probs * counts.sum()
    if np.any(expected <= 0):
        raise ValueError("all categories need positive expected counts")
    stat = float(((counts - expected) ** 2 / expected).sum())
    return stat, chi2_sf(stat, counts.size - 1)
