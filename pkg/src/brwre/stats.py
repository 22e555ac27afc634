"""Estimators shared by the experiments: CIs, paired tests, slopes, tail bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _st


@dataclass(frozen=True)
class EstimateWithCI:
    mean: float
    std_err: float
    n: int
    confidence_level: float = 0.99

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one sample")
        if self.std_err < 0:
            raise ValueError("std_err must be nonnegative")

    @classmethod
    def from_samples(cls, samples, confidence_level: float = 0.99) -> "EstimateWithCI":
        x = np.asarray(samples, dtype=float).ravel()
        if x.size < 2:
            raise ValueError("need n >= 2 samples for a standard error")
        return cls(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), int(x.size),
                   confidence_level)

    @property
    def z(self) -> float:
        return float(_st.norm.ppf(0.5 + 0.5 * self.confidence_level))

    @property
    def half_width(self) -> float:
        return self.z * self.std_err

    @property
    def ci(self) -> tuple[float, float]:
        return self.mean - self.half_width, self.mean + self.half_width

    def contains(self, value: float) -> bool:
        lo, hi = self.ci
        return lo <= value <= hi

    def to_dict(self) -> dict:
        lo, hi = self.ci
        return {"estimate": self.mean, "std_err": self.std_err, "n": self.n,
                "confidence_level": self.confidence_level, "ci": [lo, hi]}


def proportion(successes, n: int, confidence_level: float = 0.99) -> EstimateWithCI:
    """Binomial frequency with its plain standard error."""
    p = float(successes) / n
    return EstimateWithCI(p, math.sqrt(max(p * (1 - p), 0.0) / n), n, confidence_level)


@dataclass(frozen=True)
class ConcentrationParams:
    """Constants of the martingale concentration lemma.

    ``A`` bounds the conditional exponential moment of the increments at
    rate ``delta``; ``n`` is the number of martingale increments.
    """

    A: float
    delta: float = 1.0
    n: int = 1

    def __post_init__(self):
        if not self.A >= 1:
            raise ValueError("A must be >= 1")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @property
    def B(self) -> float:
        return 2.0 * math.sqrt(6.0) * self.A**2 / self.delta**2


FORMS = ("proof_derived", "stated")


def concentration_bound(params: ConcentrationParams, eps: float, form: str = "proof_derived") -> float:
    """Upper bound on ``Q(|X - Q[X]| >= eps * n)``.

    ``form="proof_derived"`` gives ``2 exp(-eps**2 n / (4 B))``, the value the
    Chernoff step yields with ``alpha = eps / (2B)``; ``form="stated"`` gives
    ``2 exp(-B eps**2 n / 4)``. The two agree only when ``B = 1``.
    Both require ``0 <= eps <= B * delta``.
    """
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")
    B = params.B
    if eps < 0 or eps > B * params.delta:
        raise ValueError(f"eps={eps} outside admissible range [0, {B * params.delta}]")
    if form == "stated":
        return 2.0 * math.exp(-B * eps * eps * params.n / 4.0)
    return 2.0 * math.exp(-eps * eps * params.n / (4.0 * B))


def paired_order_test(a, b) -> float:
    """z-score of ``mean(a - b)`` for paired samples.

    Returns ``+inf``/``-inf`` when the differences are constant and nonzero,
    and 0 when they are identically zero.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    mu = diff.mean()
    sd = diff.std(ddof=1) if diff.size > 1 else 0.0
    # spread below rounding noise counts as zero variance
    if sd <= 1e-12 * max(1.0, abs(mu)):
        if mu == 0 or abs(mu) <= 1e-15:
            return 0.0
        return math.copysign(math.inf, mu)
    return float(mu / (sd / math.sqrt(diff.size)))


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    std_err: float
    intercept: float
    n: int


def slope_fit(t, y, t_min: float = -math.inf) -> SlopeFit:
    """Ordinary least squares slope of ``y`` against ``t`` over ``t >= t_min``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = t >= t_min
    t, y = t[keep], y[keep]
    if t.size < 3:
        raise ValueError(f"insufficient points for a slope fit: {t.size} < 3")
    res = _st.linregress(t, y)
    return SlopeFit(float(res.slope), float(res.stderr), float(res.intercept), int(t.size))


def tail_frequencies(deviations, epsilons) -> np.ndarray:
    """Empirical ``P(|dev| > eps)`` for each eps."""
    dev = np.abs(np.asarray(deviations, dtype=float))
    return np.array([(dev > e).mean() for e in epsilons])
