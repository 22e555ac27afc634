"""Generating functions, the quenched operator Phi_t and extinction fields.

For a fixed environment, ``Phi_t`` maps a field xi on Z^d to

    Phi_{t,x}(xi) = (1/2d) sum_{y ~ x} qhat_{t,x}(xi_y),

and the extinction probability of the population started at ``(0, x)`` by
time ``t`` is ``(Phi_0 o Phi_1 o ... o Phi_{t-1})(0)`` evaluated at ``x``.
Fields live on the l1-ball of radius R; neighbours outside the window read
``boundary_value``. Information moves one site per application, so the value
at ``x`` after ``t`` applications is exact whenever ``|x|_1 + t <= R``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .env import DisorderSpec, EnvironmentField, OffspringLaw, atoms_batch, derive_stream
from .stats import EstimateWithCI, proportion

TOL = 1e-12
TAG_SW = 211


def qhat(law: OffspringLaw, s):
    """Generating function ``sum_k s^k q(k)`` (with 0^0 = 1)."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(s_arr > 1):
        raise ValueError("qhat is defined on [0, 1]")
    out = np.polyval(law.pmf[::-1], s_arr)
    return float(out) if np.ndim(out) == 0 else out


def _qhat_rows(pmf: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Horner evaluation with one pmf row per element: ``pmf[..., k]``, ``s[...]``."""
    out = np.zeros(s.shape)
    for k in range(pmf.shape[-1] - 1, -1, -1):
        out = out * s + pmf[..., k]
    return out


# --- fields on a window -----------------------------------------------------

@dataclass
class FieldOnWindow:
    """Values on ``{x : |x|_1 <= R}`` stored on the box ``[-R, R]^d``."""

    d: int
    R: int
    values: np.ndarray
    boundary_value: float = 0.0

    def __post_init__(self):
        shape = (2 * self.R + 1,) * self.d
        self.values = np.broadcast_to(np.asarray(self.values, dtype=float), shape).copy()
        if not 0.0 <= self.boundary_value <= 1.0:
            raise ValueError("boundary_value must lie in [0, 1]")
        self.values[~self.mask] = self.boundary_value
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValueError("field values must lie in [0, 1]")

    @classmethod
    def constant(cls, d: int, R: int, value: float, boundary_value: float = 0.0) -> "FieldOnWindow":
        return cls(d, R, np.full((2 * R + 1,) * d, float(value)), boundary_value)

    @property
    def mask(self) -> np.ndarray:
        r = np.arange(-self.R, self.R + 1)
        grids = np.meshgrid(*([r] * self.d), indexing="ij")
        return sum(np.abs(g) for g in grids) <= self.R

    @property
    def coords(self) -> np.ndarray:
        r = np.arange(-self.R, self.R + 1)
        return np.stack(np.meshgrid(*([r] * self.d), indexing="ij"), axis=-1)

    def at(self, x) -> float:
        x = tuple(int(c) for c in np.atleast_1d(x))
        if sum(abs(c) for c in x) > self.R:
            return self.boundary_value
        return float(self.values[tuple(self.R + c for c in x)])

    def interior(self, margin: int) -> np.ndarray:
        """Mask of sites with ``|x|_1 <= R - margin``."""
        r = np.arange(-self.R, self.R + 1)
        grids = np.meshgrid(*([r] * self.d), indexing="ij")
        return sum(np.abs(g) for g in grids) <= self.R - margin


def _neighbour_values(xi: FieldOnWindow) -> list[np.ndarray]:
    d = xi.d
    padded = np.pad(xi.values, 1, constant_values=xi.boundary_value)
    out = []
    for i in range(d):
        for off in (2, 0):
            idx = tuple(slice(off, off + 2 * xi.R + 1) if j == i else slice(1, 2 * xi.R + 2)
                        for j in range(d))
            out.append(padded[idx])
    return out


def phi_step(xi: FieldOnWindow, env: EnvironmentField, t: int) -> FieldOnWindow:
    """Apply ``Phi_t`` of ``env`` on the window of ``xi``."""
    if xi.d != env.d:
        raise ValueError("field and environment dimensions differ")
    a = env.atoms_at(t, xi.coords)
    pmf = env.spec.pmf_matrix[a]
    acc = np.zeros(xi.values.shape)
    for nb in _neighbour_values(xi):
        acc += _qhat_rows(pmf, nb)
    out = np.clip(acc / (2 * xi.d), 0.0, 1.0)
    return FieldOnWindow(xi.d, xi.R, out, xi.boundary_value)


def compose(env: EnvironmentField, xi: FieldOnWindow, t: int) -> FieldOnWindow:
    """``Phi_0 o Phi_1 o ... o Phi_{t-1}(xi)``, applied right to left."""
    for u in range(t - 1, -1, -1):
        xi = phi_step(xi, env, u)
    return xi


# --- extinction field ----------------------------------------------------------

@dataclass
class ExtinctionResult:
    field: FieldOnWindow
    origin_sequence: np.ndarray  # delta_{t,0} for t = 0..t_reached
    t_reached: int
    converged: bool
    last_increment: float

    @property
    def origin(self) -> float:
        return float(self.origin_sequence[-1])

    @property
    def survival(self) -> float:
        return 1.0 - self.origin

    def to_dict(self) -> dict:
        return {"delta_origin": self.origin, "survival": self.survival,
                "t_reached": self.t_reached, "converged": self.converged,
                "last_increment": self.last_increment,
                "origin_sequence": [float(v) for v in self.origin_sequence]}


def extinction_field(env: EnvironmentField, t_max: int, window_R: int | None = None,
                     tol: float = TOL) -> ExtinctionResult:
    """Quenched extinction probabilities ``delta_{t,x}`` by backward composition.

    The horizon grows from t = 1 until the increment of ``delta_{t,0}``
    drops below ``tol`` or ``t_max`` is reached; the unresolved increment is
    reported in ``last_increment``.
    """
    R = t_max if window_R is None else window_R
    if R < t_max:
        raise ValueError(f"window_R={R} < t_max={t_max}: truncation would reach the origin")
    zero = FieldOnWindow.constant(env.d, R, 0.0)
    seq = [0.0]
    fld = zero
    inc = math.inf
    t = 0
    while t < t_max:
        t += 1
        fld = compose(env, zero, t)
        seq.append(fld.at((0,) * env.d))
        inc = seq[-1] - seq[-2]
        if abs(inc) < tol:
            break
    return ExtinctionResult(fld, np.array(seq), t, abs(inc) < tol, float(inc))


def fixed_point_residual(env: EnvironmentField, t_max: int, window_R: int) -> dict:
    """Check ``delta(q) = Phi_0(delta(theta_{1,0} q))`` on the safe interior.

    Both sides use the horizon-``t_max`` approximation of ``delta``; the
    residual is compared with the horizon gap ``|delta_T - delta_{T-1}|`` on
    the same sites.
    """
    if window_R < t_max + 1:
        raise ValueError("need window_R >= t_max + 1")
    zero = FieldOnWindow.constant(env.d, window_R, 0.0)
    lhs = compose(env, zero, t_max)
    prev = compose(env, zero, t_max - 1)
    shifted = compose(env.shifted(1), zero, t_max)
    rhs = phi_step(shifted, env, 0)
    safe = lhs.interior(t_max + 1)
    residual = float(np.max(np.abs(lhs.values - rhs.values)[safe]))
    gap = float(np.max(np.abs(lhs.values - prev.values)[safe]))
    origin = tuple([window_R] * env.d)
    return {"residual": residual, "gap": gap,
            "residual_origin": float(abs(lhs.values[origin] - rhs.values[origin])),
            "gap_origin": float(abs(lhs.values[origin] - prev.values[origin])),
            "t_max": t_max, "window_R": window_R}


# --- generating-function identity ------------------------------------------------

def gf_identity_check(env: EnvironmentField, xi: FieldOnWindow, t: int, replicas: int,
                      rng: np.random.Generator | None = None) -> dict:
    """Monte Carlo ``E^q[prod_x xi_x^{|B_{t,x}|}]`` against the composed operator."""
    from .brw import TAG_GF, run_batch

    if t > 6:
        raise ValueError("identity check is meant for t <= 6")
    if xi.R < t:
        raise ValueError("the field window must cover all sites reachable in t steps")
    if rng is None:
        rng = derive_stream(env.spec.master_seed, TAG_GF, env.replica_id, t)
    exact = compose(env, xi, t).at((0,) * env.d)
    res = run_batch(env.spec, env.d, np.full(replicas, env.replica_id), t, rng,
                    cap=np.iinfo(np.int64).max, t_offset=env.t_offset, x_offset=env.x_offset,
                    keep_final=True)
    vals = np.array([xi.at(s) for s in res.final_sites])
    with np.errstate(divide="ignore"):
        logs = res.final_counts * np.log(vals)
    logs = np.where((vals == 0) & (res.final_counts > 0), -np.inf, logs)
    per_row = np.zeros(replicas)
    np.add.at(per_row, res.final_rows, logs)
    samples = np.exp(per_row)
    mc = EstimateWithCI.from_samples(samples)
    if mc.std_err == 0:
        z = 0.0 if abs(mc.mean - exact) < 1e-12 else math.copysign(math.inf, mc.mean - exact)
    else:
        z = (mc.mean - exact) / mc.std_err
    return {"exact": exact, "mc": mc.mean, "std_err": mc.std_err, "z": z, "t": t,
            "replicas": replicas}


# --- comparison processes -----------------------------------------------------------

@dataclass
class GWResult:
    sigma: float
    fixed_point: float
    iterations: int
    converged: bool
    polished: bool


def gw_fixed_point(law: OffspringLaw, t_max: int = 100_000, tol: float = TOL) -> GWResult:
    """Smallest fixed point of ``qhat`` on [0, 1] by iteration from 0.

    When iteration stalls (slow near-critical convergence) the fixed point is
    polished by root bracketing on ``[s_t, 1]``; subcritical and critical laws
    (``m <= 1``, ``q(1) < 1``) have fixed point 1.
    """
    s = 0.0
    it = 0
    converged = False
    for it in range(1, t_max + 1):
        nxt = qhat(law, s)
        if abs(nxt - s) < tol:
            s = nxt
            converged = True
            break
        s = nxt
    p1 = law.pmf[1] if law.pmf.size > 1 else 0.0
    if law.m <= 1 and p1 < 1:
        return GWResult(0.0, 1.0, it, converged, not converged)
    # iterates sit below the fixed point, so qhat(s) - s changes sign on [s, hi]
    f = lambda u: qhat(law, u) - u
    polished = False
    if s < 1.0 and f(s) > 0:
        hi = 0.5 * (s + 1.0)
        while f(hi) >= 0 and 1 - hi > 1e-15:
            hi = 0.5 * (hi + 1.0)
        if f(hi) < 0:
            s = brentq(f, s, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps)
            polished = True
    return GWResult(1.0 - s, s, it, converged, polished)


def gw_bound(spec: DisorderSpec, t_max: int = 100_000, tol: float = TOL) -> float:
    """Survival probability of the Galton-Watson process with the annealed law."""
    return gw_fixed_point(spec.annealed_law, t_max, tol).sigma


@dataclass
class SWResult:
    estimate: EstimateWithCI
    ladder: dict = field(default_factory=dict)
    t_max: int = 0
    replicas: int = 0

    @property
    def sigma(self) -> float:
        return self.estimate.mean

    def to_dict(self) -> dict:
        return {"sigma_sw": self.estimate.mean, "std_err": self.estimate.std_err,
                "ci": list(self.estimate.ci), "ladder": self.ladder, "t_max": self.t_max,
                "replicas": self.replicas}


def sw_composition(spec: DisorderSpec, replica_ids: Sequence[int], t: int) -> np.ndarray:
    """``qhat_{0,0} o qhat_{1,0} o ... o qhat_{t-1,0}(0)`` per environment replica."""
    rid = np.asarray(replica_ids, dtype=np.int64)
    times = np.arange(t)
    atoms = atoms_batch(spec, rid[:, None], times[None, :], np.zeros((1, t, 1), dtype=np.int64))
    s = np.zeros(rid.size)
    pmf = spec.pmf_matrix
    for u in range(t - 1, -1, -1):
        s = _qhat_rows(pmf[atoms[:, u]], s)
    return s


def sw_bound(spec: DisorderSpec, t_max: int = 400, replicas: int = 4000,
             first_replica: int = 0, ladder: Sequence[int] | None = None) -> SWResult:
    """Survival probability of the Smith-Wilkinson process along q_{t,0}.

    Each replica is an exact composition of generating functions; the
    Monte Carlo is only over the i.i.d. time sequence of laws.
    """
    if ladder is None:
        ladder = sorted({max(1, t_max // 8), max(1, t_max // 4), max(1, t_max // 2), t_max})
    ids = np.arange(first_replica, first_replica + replicas)
    out = {}
    est = None
    for t in ladder:
        surv = 1.0 - sw_composition(spec, ids, t)
        e = EstimateWithCI.from_samples(surv) if replicas >= 2 else proportion(surv.sum(), 1)
        out[str(t)] = {"sigma_sw": e.mean, "std_err": e.std_err}
        if t == max(ladder):
            est = e
    return SWResult(est, out, int(max(ladder)), replicas)
