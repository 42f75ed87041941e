"""Sample moments, AUROC, Student-t tail probabilities and Welch's t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.stats import rankdata

CF_EPS = 1e-12
CF_MAX_ITER = 300
_TINY = 1e-300

Direction = Literal["a_greater", "a_less"]


class UndefinedStatistic(ValueError):
    """The statistic does not exist for the given input (e.g. one class only)."""


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    variance: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "SampleSummary":
        arr = np.asarray(values, dtype=np.float64)
        if arr.size < 2:
            raise UndefinedStatistic("variance needs at least two samples")
        return cls(int(arr.size), float(arr.mean()), float(arr.var(ddof=1)))


@dataclass(frozen=True)
class WelchResult:
    t_statistic: float
    degrees_of_freedom: float
    p_one_tailed: float


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve as a normalised Mann-Whitney U.

    Tied scores across classes earn half credit.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int((labels == 0).sum())
    if n_pos + n_neg != labels.size:
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise UndefinedStatistic("AUROC needs both classes present")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _beta_cf(a: float, b: float, x: float) -> float:
    # Modified Lentz evaluation of the incomplete-beta continued fraction.
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a: float, b: float, x: float, y: float | None = None) -> float:
    """Regularised incomplete beta I_x(a, b).

    ``y`` may carry ``1 - x`` computed without cancellation by the caller.
    """
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if y is None:
        y = 1.0 - x
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if y == 0.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log(y)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, y) / b


def t_survival(t: float, df: float) -> float:
    """P(T > t) for a Student-t variable with ``df`` degrees of freedom."""
    if not df > 0:
        raise ValueError("degrees of freedom must be positive")
    if not math.isfinite(t):
        if math.isnan(t):
            raise ValueError("t must not be NaN")
        return 0.0 if t > 0 else 1.0
    t2 = t * t
    denom = df + t2
    # P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2)
    two_tail = betainc_reg(df / 2.0, 0.5, df / denom, t2 / denom)
    upper = 0.5 * two_tail
    return upper if t >= 0 else 1.0 - upper


def welch_one_tailed(a: Sequence[float], b: Sequence[float], direction: Direction = "a_greater") -> WelchResult:
    """One-sided Welch test of mean(a) > mean(b) (or < for ``a_less``)."""
    if direction not in ("a_greater", "a_less"):
        raise ValueError(f"unknown direction {direction!r}")
    sa = SampleSummary.of(a)
    sb = SampleSummary.of(b)
    va = sa.variance / sa.n
    vb = sb.variance / sb.n
    se2 = va + vb
    diff = sa.mean - sb.mean
    if se2 == 0.0:
        if diff == 0.0:
            raise UndefinedStatistic("both samples are constant with equal means")
        t = math.copysign(math.inf, diff)
        df = float(sa.n + sb.n - 2)
    else:
        t = diff / math.sqrt(se2)
        df = se2**2 / (va**2 / (sa.n - 1) + vb**2 / (sb.n - 1))
    signed = t if direction == "a_greater" else -t
    return WelchResult(t, df, t_survival(signed, df))
