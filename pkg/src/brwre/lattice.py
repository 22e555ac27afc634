"""Simple random walk on Z^d: directions, periods, path probabilities, rate function."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .stats import EstimateWithCI

EXACT_T_MAX = 20
DEFAULT_T_LIMIT = 40
DEFAULT_A_MAX = 40.0


def _period(theta: Sequence[Fraction]) -> int:
    l1 = sum(abs(f) for f in theta)
    if l1 > 1:
        raise ValueError(f"|theta|_1 = {l1} > 1")
    L = 1
    for f in theta:
        L = L * f.denominator // math.gcd(L, f.denominator)
    rest = L * (1 - l1)
    assert rest.denominator == 1
    return L if rest.numerator % 2 == 0 else 2 * L


@dataclass(frozen=True)
class Direction:
    """A rational direction in the unit l1-ball and its period."""

    theta: tuple[Fraction, ...]

    def __post_init__(self):
        th = tuple(Fraction(f) for f in self.theta)
        if not th:
            raise ValueError("direction needs at least one coordinate")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "n_theta", _period(th))

    @classmethod
    def parse(cls, text: str) -> "Direction":
        """Parse ``"1/2,0,-1/4"``; the dimension is the number of entries."""
        try:
            parts = [Fraction(p.strip()) for p in str(text).split(",")]
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"malformed direction {text!r}: {exc}") from None
        return cls(tuple(parts))

    @classmethod
    def axis(cls, d: int, i: int = 0, sign: int = 1) -> "Direction":
        return cls(tuple(Fraction(sign if j == i else 0) for j in range(d)))

    @classmethod
    def zero(cls, d: int) -> "Direction":
        return cls((Fraction(0),) * d)

    @property
    def d(self) -> int:
        return len(self.theta)

    @property
    def l1(self) -> Fraction:
        return sum((abs(f) for f in self.theta), Fraction(0))

    def as_float(self) -> np.ndarray:
        return np.array([float(f) for f in self.theta])

    def admissible(self, t: int) -> bool:
        """``t`` in N(theta), i.e. a nonnegative multiple of the period."""
        return t >= 0 and t % self.n_theta == 0

    def site(self, t: int) -> tuple[int, ...]:
        """The lattice point ``t * theta``; requires ``t`` admissible."""
        if not self.admissible(t):
            raise ValueError(f"t={t} is not a multiple of the period {self.n_theta}")
        return tuple(int(f * t) for f in self.theta)

    def __str__(self):
        return ",".join(str(f) for f in self.theta)


def period(theta, d: int | None = None) -> int:
    """Minimal t >= 1 with ``t*theta`` integral and ``t - t|theta|_1`` even."""
    if isinstance(theta, Direction):
        return theta.n_theta
    if isinstance(theta, str):
        return Direction.parse(theta).n_theta
    th = [Fraction(f) for f in np.atleast_1d(theta)]
    if d is not None and len(th) == 1 and d > 1:
        th = th * d if th[0] == 0 else th + [Fraction(0)] * (d - 1)
    return _period(th)


def neighbors(d: int) -> np.ndarray:
    """The 2d unit steps, shape ``(2d, d)``: +e_1, -e_1, +e_2, ..."""
    e = np.zeros((2 * d, d), dtype=np.int64)
    for i in range(d):
        e[2 * i, i] = 1
        e[2 * i + 1, i] = -1
    return e


def kernel(x, y) -> float:
    """Transition probability of the simple symmetric walk."""
    x = np.atleast_1d(x)
    y = np.atleast_1d(y)
    return 1.0 / (2 * x.size) if int(np.abs(x - y).sum()) == 1 else 0.0


def _shift_sum(a: np.ndarray) -> np.ndarray:
    """Sum of the 2d unit translates of a dense box array (box grows by 1)."""
    d = a.ndim
    out = np.zeros(tuple(s + 2 for s in a.shape), dtype=a.dtype)
    for i in range(d):
        for off in (0, 2):
            idx = tuple(slice(off, off + a.shape[j]) if j == i else slice(1, 1 + a.shape[j])
                        for j in range(d))
            out[idx] = out[idx] + a
    return out


@lru_cache(maxsize=64)
def _path_counts(d: int, t: int) -> np.ndarray:
    """Exact number of t-step paths to each x in the box [-t, t]^d."""
    a = np.ones((1,) * d, dtype=object)
    for _ in range(t):
        a = _shift_sum(a)
    return a


def _log_probs_float(d: int, t: int) -> np.ndarray:
    lp = np.zeros((1,) * d)
    step = -math.log(2 * d)
    for _ in range(t):
        new = np.full(tuple(s + 2 for s in lp.shape), -np.inf)
        for i in range(d):
            for off in (0, 2):
                idx = tuple(slice(off, off + lp.shape[j]) if j == i else slice(1, 1 + lp.shape[j])
                            for j in range(d))
                new[idx] = np.logaddexp(new[idx], lp + step)
        lp = new
    return lp


@lru_cache(maxsize=64)
def _log_probs_cached(d: int, t: int) -> np.ndarray:
    if t <= EXACT_T_MAX:
        counts = _path_counts(d, t)
        denom = (2 * d) ** t
        flat = [math.log(c) - math.log(denom) if c else -math.inf for c in counts.ravel()]
        return np.array(flat).reshape(counts.shape)
    return _log_probs_float(d, t)


def ln_walk_prob(theta: Direction, t: int, t_limit: int = DEFAULT_T_LIMIT) -> float:
    """Exact ``ln P_S(S_t = t*theta)``.

    Integer path counting up to t = 20, log-domain convolution beyond.
    """
    if not isinstance(theta, Direction):
        theta = Direction(tuple(theta))
    if t < 1 or t > t_limit:
        raise ValueError(f"t={t} outside [1, {t_limit}]")
    x = theta.site(t)
    return float(_log_probs_cached(theta.d, t)[tuple(t + xi for xi in x)])


def walk_prob_exact(x: Sequence[int], t: int) -> Fraction:
    """``P_S(S_t = x)`` as an exact fraction (t <= 20)."""
    d = len(x)
    if any(abs(xi) > t for xi in x):
        return Fraction(0)
    c = _path_counts(d, t)[tuple(t + xi for xi in x)]
    return Fraction(int(c), (2 * d) ** t)


# --- Legendre transform -------------------------------------------------

def _log_cosh(a: np.ndarray) -> np.ndarray:
    a = np.abs(a)
    return a + np.log1p(np.exp(-2 * a)) - math.log(2)


def log_mgf(alpha) -> float:
    """``ln E[exp(alpha . S_1)] = ln((1/d) sum_i cosh alpha_i)``."""
    alpha = np.asarray(alpha, dtype=float)
    return float(logsumexp(_log_cosh(alpha)) - math.log(alpha.size))


def grad_log_mgf(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    lc = _log_cosh(alpha)
    w = np.exp(lc - logsumexp(lc))  # cosh_i / sum cosh
    return w * np.tanh(alpha)


def _hess_log_mgf(alpha: np.ndarray) -> np.ndarray:
    lc = _log_cosh(alpha)
    w = np.exp(lc - logsumexp(lc))
    s = w * np.tanh(alpha)
    return np.diag(w) - np.outer(s, s)


def legendre_objective(alpha, theta) -> float:
    return float(np.dot(alpha, theta) - log_mgf(alpha))


def legendre_gradient(alpha, theta) -> np.ndarray:
    return np.asarray(theta, dtype=float) - grad_log_mgf(alpha)


def rate_function(theta, a_max: float = DEFAULT_A_MAX, tol: float = 1e-13,
                  max_iter: int = 500) -> float:
    """Large-deviation rate ``sup_alpha {alpha.theta - ln M(alpha)}`` of S_t/t.

    Damped Newton ascent on the concave objective, projected onto the box
    ``|alpha|_inf <= a_max``. Boundary directions saturate the box and return
    the limit up to O(exp(-a_max)).
    """
    if isinstance(theta, Direction):
        theta = theta.as_float()
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if np.abs(theta).sum() > 1 + 1e-12:
        raise ValueError(f"|theta|_1 = {np.abs(theta).sum()} > 1")
    if not np.any(theta):
        return 0.0
    alpha = np.zeros_like(theta)
    f = legendre_objective(alpha, theta)
    for _ in range(max_iter):
        g = legendre_gradient(alpha, theta)
        at_lo = (alpha <= -a_max) & (g < 0)
        at_hi = (alpha >= a_max) & (g > 0)
        free = ~(at_lo | at_hi)
        if not np.any(free) or np.max(np.abs(g[free])) < tol:
            break
        H = _hess_log_mgf(alpha)[np.ix_(free, free)]
        gf = g[free]
        # Levenberg damping keeps the step defined where H is near singular
        mu = 1e-12 * max(1.0, np.trace(H))
        while True:
            try:
                step = np.linalg.solve(H + mu * np.eye(H.shape[0]), gf)
                break
            except np.linalg.LinAlgError:
                mu = mu * 10 if mu else 1e-12
        direction = np.zeros_like(alpha)
        direction[free] = step
        lr = 1.0
        while lr > 1e-12:
            cand = np.clip(alpha + lr * direction, -a_max, a_max)
            fc = legendre_objective(cand, theta)
            if fc >= f - 1e-15:
                break
            lr *= 0.5
        if np.allclose(cand, alpha, rtol=0, atol=1e-15):
            break
        alpha, f = cand, max(fc, f)
    return float(min(max(f, 0.0), math.log(2 * theta.size)))


def return_probability(d: int, t_max: int = 10_000, replicas: int = 10_000,
                       seed: int = 0, chunk: int = 4096) -> dict:
    """Monte Carlo estimate of the return probability of the walk.

    For d <= 2 the walk is recurrent and 1.0 is returned exactly. For d >= 3
    the report carries ``truncation_bound``, an upper bound (from the local
    CLT) on the expected number of returns after ``t_max``, which bounds the
    probability that a first return is missed.
    """
    if d <= 2:
        return {"d": d, "estimate": EstimateWithCI(1.0, 0.0, max(replicas, 1)),
                "analytic": True, "truncation_bound": 0.0, "t_max": t_max}
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(d, 0x7E7)))
    returned = 0
    done = 0
    while done < replicas:
        n = min(chunk, replicas - done)
        pos = np.zeros((n, d), dtype=np.int32)
        alive = np.arange(n)
        for _ in range(t_max):
            k = alive.size
            if k == 0:
                break
            axis = rng.integers(0, d, size=k)
            sign = rng.integers(0, 2, size=k) * 2 - 1
            pos[alive, axis] += sign.astype(np.int32)
            back = ~np.any(pos[alive], axis=1)
            if back.any():
                returned += int(back.sum())
                alive = alive[~back]
        done += n
    p = returned / replicas
    est = EstimateWithCI(p, math.sqrt(p * (1 - p) / replicas), replicas)
    # P(S_2n = 0) ~ 2 (d / (4 pi n))^{d/2}
    n0 = t_max // 2 + 1
    tail = 2 * (d / (4 * math.pi)) ** (d / 2) * _zeta_tail(d / 2, n0)
    return {"d": d, "estimate": est, "analytic": False, "truncation_bound": tail, "t_max": t_max}


def _zeta_tail(s: float, n0: int) -> float:
    """Upper bound on sum_{n >= n0} n^{-s} for s > 1."""
    return n0 ** (-s) + n0 ** (1 - s) / (s - 1)
