"""Offspring laws, disorder laws and counter-based quenched environments.

An environment assigns an offspring law to every space-time site ``(t, x)``.
Laws are never stored: the law at a site is recomputed from a hash of
``(master_seed, replica_id, t, x)``, so a field of any size costs O(1) memory
and every query is reproducible.

Hash construction
-----------------
Every integer of the key is folded into a 64-bit state with the SplitMix64
finalizer::

    h = mix(master_seed ^ DOMAIN)
    h = mix(h ^ (replica_id + GOLDEN))
    h = mix(h ^ (t + GOLDEN))
    h = mix(h ^ (x_i + GOLDEN))          # for i = 1..d, two's complement

``u = (h >> 11) * 2**-53`` is a uniform draw on ``[0, 1)`` and selects the
atom of the disorder law through its cumulative weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Sequence

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_DOMAIN_ENV = 0x5EED_0F_E7A1_0000

FAMILIES = ("deterministic", "mixture", "binary", "poisson")
DEFAULT_K_MAX = 64


def _mix64(h):
    """SplitMix64 finalizer on a uint64 array."""
    with np.errstate(over="ignore"):
        h = (h ^ (h >> np.uint64(30))) * _MIX1
        h = (h ^ (h >> np.uint64(27))) * _MIX2
        h = h ^ (h >> np.uint64(31))
    return h


def _as_u64(a):
    a = np.asarray(a)
    if a.dtype == np.uint64:
        return a
    return np.asarray(a, dtype=np.int64).view(np.uint64)


def hash_keys(master_seed: int, replica_id, t, x) -> np.ndarray:
    """Counter-based 64-bit hash of ``(master_seed, replica_id, t, x)``.

    ``replica_id`` and ``t`` broadcast against the leading shape of ``x``,
    whose last axis holds the ``d`` lattice coordinates.
    """
    x = np.asarray(x, dtype=np.int64)
    lead = x.shape[:-1]
    h = np.full(lead, (int(master_seed) ^ _DOMAIN_ENV) & _MASK, dtype=np.uint64)
    h = _mix64(h)
    with np.errstate(over="ignore"):
        h = _mix64(h ^ (np.broadcast_to(_as_u64(replica_id), lead) + _GOLDEN))
        h = _mix64(h ^ (np.broadcast_to(_as_u64(t), lead) + _GOLDEN))
        for i in range(x.shape[-1]):
            h = _mix64(h ^ (_as_u64(x[..., i]) + _GOLDEN))
    return h


def hash_uniform(master_seed: int, replica_id, t, x) -> np.ndarray:
    h = hash_keys(master_seed, replica_id, t, x)
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


def derive_stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent numpy Generator for the stream labelled by ``key``.

    Streams are spawned from ``SeedSequence(master_seed, spawn_key=key)`` so
    different keys never share state and no global RNG is touched.
    """
    ss = np.random.SeedSequence(int(master_seed) & _MASK, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class OffspringLaw:
    """Finite-support probability mass function on ``{0, ..., k_max}``."""

    pmf: np.ndarray

    def __post_init__(self):
        p = np.array(self.pmf, dtype=np.float64).ravel()
        if p.size == 0:
            raise ValueError("pmf must be non-empty")
        if not np.all((p >= 0) & (p <= 1)):
            raise ValueError("pmf entries must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"pmf sums to {p.sum()!r}, not 1")
        # trailing zeros carry no information
        nz = np.nonzero(p)[0]
        p = p[: nz[-1] + 1]
        p.setflags(write=False)
        object.__setattr__(self, "pmf", p)

    @classmethod
    def from_dict(cls, masses: dict[int, float]) -> "OffspringLaw":
        k_max = max(masses)
        p = np.zeros(k_max + 1)
        for k, v in masses.items():
            p[k] = v
        return cls(p)

    @classmethod
    def poisson(cls, lam: float, k_max: int = DEFAULT_K_MAX) -> "OffspringLaw":
        """Poisson(lam) truncated to ``{0..k_max}`` and renormalized."""
        k = np.arange(k_max + 1)
        logp = k * math.log(lam) - lam - np.array([math.lgamma(i + 1) for i in k])
        p = np.exp(logp - logp.max())
        return cls(p / p.sum())

    @property
    def k_max(self) -> int:
        return self.pmf.size - 1

    @cached_property
    def m(self) -> float:
        return float(np.dot(np.arange(self.pmf.size), self.pmf))

    @cached_property
    def m2(self) -> float:
        k = np.arange(self.pmf.size)
        return float(np.dot(k * k, self.pmf))

    @cached_property
    def ln_m(self) -> float:
        return math.log(self.m) if self.m > 0 else -math.inf

    @property
    def q0(self) -> float:
        return float(self.pmf[0])

    def __eq__(self, other):
        if not isinstance(other, OffspringLaw):
            return NotImplemented
        return np.array_equal(self.pmf, other.pmf)

    def __hash__(self):
        return hash(self.pmf.tobytes())

    def __repr__(self):
        masses = {k: float(v) for k, v in enumerate(self.pmf) if v > 0}
        return f"OffspringLaw({masses})"


def moments(law: OffspringLaw) -> tuple[float, float]:
    """Mean and second moment ``(m, m2)`` of ``law``."""
    return law.m, law.m2


def _law_from_json(obj) -> OffspringLaw:
    if isinstance(obj, dict):
        return OffspringLaw.from_dict({int(k): float(v) for k, v in obj.items()})
    return OffspringLaw(np.asarray(obj, dtype=float))


def _law_to_json(law: OffspringLaw) -> dict[str, float]:
    return {str(k): float(v) for k, v in enumerate(law.pmf) if v > 0}


@dataclass(frozen=True)
class DisorderSpec:
    """The disorder law Q: a finite catalog of atom laws with weights.

    Parameters
    ----------
    family : str
        One of ``deterministic``, ``mixture``, ``binary`` or ``poisson``.
    params : dict
        Family hyperparameters (see ``docs/config.md``).
    master_seed : int
        Root of every random stream in an experiment.
    k_max : int
        Support bound for truncated families.
    """

    family: str
    params: dict = field(default_factory=dict, compare=False, hash=False)
    master_seed: int = 0
    k_max: int = DEFAULT_K_MAX

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown disorder family {self.family!r}; expected one of {FAMILIES}")
        atoms, weights = self._build_atoms()
        weights = np.asarray(weights, dtype=np.float64)
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("atom weights must be nonnegative and sum to 1")
        object.__setattr__(self, "_atoms", tuple(atoms))
        object.__setattr__(self, "_weights", weights)

    # --- constructors -------------------------------------------------
    @classmethod
    def deterministic(cls, law, master_seed: int = 0, k_max: int = DEFAULT_K_MAX):
        law = law if isinstance(law, OffspringLaw) else _law_from_json(law)
        return cls("deterministic", {"law": _law_to_json(law)}, master_seed, k_max)

    @classmethod
    def mixture(cls, laws: Sequence, weights: Sequence[float], master_seed: int = 0,
                k_max: int = DEFAULT_K_MAX):
        laws = [l if isinstance(l, OffspringLaw) else _law_from_json(l) for l in laws]
        return cls("mixture", {"laws": [_law_to_json(l) for l in laws],
                               "weights": [float(w) for w in weights]}, master_seed, k_max)

    @classmethod
    def binary(cls, p_lo: float, p_hi: float, n_grid: int, master_seed: int = 0,
               k_max: int = DEFAULT_K_MAX):
        return cls("binary", {"p_lo": p_lo, "p_hi": p_hi, "n_grid": n_grid}, master_seed, k_max)

    @classmethod
    def poisson(cls, lambdas: Sequence[float], weights: Sequence[float] | None = None,
                master_seed: int = 0, k_max: int = DEFAULT_K_MAX):
        lambdas = [float(l) for l in lambdas]
        if weights is None:
            weights = [1.0 / len(lambdas)] * len(lambdas)
        return cls("poisson", {"lambdas": lambdas, "weights": [float(w) for w in weights]},
                   master_seed, k_max)

    def _build_atoms(self):
        p = self.params
        if self.family == "deterministic":
            return [_law_from_json(p["law"])], [1.0]
        if self.family == "mixture":
            laws = [_law_from_json(l) for l in p["laws"]]
            if len(laws) != len(p["weights"]):
                raise ValueError("mixture needs one weight per law")
            return laws, p["weights"]
        if self.family == "binary":
            lo, hi, n = float(p["p_lo"]), float(p["p_hi"]), int(p["n_grid"])
            if not 0.0 <= lo <= hi <= 1.0 or n < 1:
                raise ValueError("binary family needs 0 <= p_lo <= p_hi <= 1 and n_grid >= 1")
            grid = np.linspace(lo, hi, n) if n > 1 else np.array([0.5 * (lo + hi)])
            return [OffspringLaw.from_dict({0: 1.0 - g, 2: g}) for g in grid], [1.0 / n] * n
        lambdas = [float(l) for l in p["lambdas"]]
        weights = p.get("weights") or [1.0 / len(lambdas)] * len(lambdas)
        if any(l <= 0 for l in lambdas):
            raise ValueError("poisson rates must be positive")
        return [OffspringLaw.poisson(l, self.k_max) for l in lambdas], weights

    # --- catalog ------------------------------------------------------
    @property
    def atoms(self) -> tuple[OffspringLaw, ...]:
        return self._atoms

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @cached_property
    def pmf_matrix(self) -> np.ndarray:
        """Atom pmfs padded to a common support, shape ``(n_atoms, K)``."""
        K = max(a.pmf.size for a in self._atoms)
        out = np.zeros((len(self._atoms), K))
        for i, a in enumerate(self._atoms):
            out[i, : a.pmf.size] = a.pmf
        return out

    @cached_property
    def atom_m(self) -> np.ndarray:
        return np.array([a.m for a in self._atoms])

    @cached_property
    def atom_ln_m(self) -> np.ndarray:
        return np.array([a.ln_m for a in self._atoms])

    @cached_property
    def _cum_weights(self) -> np.ndarray:
        c = np.cumsum(self._weights)
        c[-1] = 1.0
        return c

    @property
    def is_constant(self) -> bool:
        """True when m_{t,x} is almost surely constant."""
        m = self.atom_m[self._weights > 0]
        return bool(np.all(m == m[0]))

    def expect(self, f) -> float:
        """Exact Q-expectation of ``f(law)`` over the atom catalog."""
        return float(sum(w * f(a) for a, w in zip(self._atoms, self._weights) if w > 0))

    @property
    def annealed_law(self) -> OffspringLaw:
        """The mean law ``k -> Q[q_{0,0}(k)]``."""
        p = self._weights @ self.pmf_matrix
        return OffspringLaw(p / p.sum())

    @property
    def mean_m(self) -> float:
        return float(self._weights @ self.atom_m)

    def atom_index(self, u: np.ndarray) -> np.ndarray:
        return np.searchsorted(self._cum_weights, u, side="right").clip(max=len(self._atoms) - 1)

    def with_seed(self, master_seed: int) -> "DisorderSpec":
        return DisorderSpec(self.family, self.params, int(master_seed), self.k_max)

    # --- serialization ------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family, "params": self.params,
                "master_seed": int(self.master_seed), "k_max": int(self.k_max)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DisorderSpec":
        return cls(d["family"], dict(d.get("params", {})), int(d.get("master_seed", 0)),
                   int(d.get("k_max", DEFAULT_K_MAX)))

    def __eq__(self, other):
        if not isinstance(other, DisorderSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash((self.family, self.master_seed, self.k_max, repr(sorted(self.params.items()))))


@dataclass(frozen=True)
class EnvironmentField:
    """One quenched draw of the environment, indexed by ``replica_id``.

    ``t_offset`` and ``x_offset`` give the space-time shifted view
    ``(t, x) -> q_{t + t_offset, x + x_offset}`` of the same draw.
    """

    spec: DisorderSpec
    replica_id: int = 0
    d: int = 1
    t_offset: int = 0
    x_offset: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        off = tuple(self.x_offset) if self.x_offset is not None else (0,) * self.d
        if len(off) != self.d:
            raise ValueError("x_offset has wrong dimension")
        object.__setattr__(self, "x_offset", off)

    def shifted(self, dt: int = 0, dx: Sequence[int] | None = None) -> "EnvironmentField":
        dx = tuple(dx) if dx is not None else (0,) * self.d
        return EnvironmentField(self.spec, self.replica_id, self.d, self.t_offset + dt,
                                tuple(a + b for a, b in zip(self.x_offset, dx)))

    def atoms_at(self, t, x) -> np.ndarray:
        """Atom indices at times ``t`` and sites ``x`` (last axis = coordinates)."""
        x = np.asarray(x, dtype=np.int64)
        if x.shape[-1] != self.d:
            raise ValueError(f"sites must have {self.d} coordinates")
        t = np.asarray(t, dtype=np.int64) + self.t_offset
        x = x + np.asarray(self.x_offset, dtype=np.int64)
        return atoms_batch(self.spec, self.replica_id, t, x)

    def m_at(self, t, x) -> np.ndarray:
        return self.spec.atom_m[self.atoms_at(t, x)]

    def ln_m_at(self, t, x) -> np.ndarray:
        return self.spec.atom_ln_m[self.atoms_at(t, x)]

    def law_at(self, t: int, x) -> OffspringLaw:
        if t < 0:
            raise ValueError("time index must be nonnegative")
        x = np.atleast_1d(np.asarray(x, dtype=np.int64))
        return self.spec.atoms[int(self.atoms_at(t, x))]


def law_at(field: EnvironmentField, t: int, x) -> OffspringLaw:
    return field.law_at(t, x)


@dataclass(frozen=True)
class AssumptionReport:
    q_ln_m: float
    q_m: float
    q_m_inv: float
    q_ln_m2: float
    q_ln_inv_surv_mass: float
    hyp1_ok: bool
    cond_1q0_ok: bool
    k2_ok: bool
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.hyp1_ok and self.cond_1q0_ok and self.k2_ok


def check_assumptions(spec: DisorderSpec) -> AssumptionReport:
    """Exact Q-expectations behind the integrability assumptions.

    Violations are reported through the flags, never raised.
    """
    violations = []
    live = [(a, w) for a, w in zip(spec.atoms, spec.weights) if w > 0]
    zero_mean = [a for a, _ in live if a.m == 0]
    dead = [a for a, _ in live if a.q0 == 1.0]
    if zero_mean:
        violations.append(f"{len(zero_mean)} atom(s) with m = 0")
    if dead:
        violations.append(f"{len(dead)} atom(s) with q(0) = 1")

    def ex(vals):
        return float(sum(w * v for (_, w), v in zip(live, vals)))

    with np.errstate(divide="ignore"):
        q_m = ex([a.m for a, _ in live])
        q_m_inv = ex([1.0 / a.m if a.m > 0 else math.inf for a, _ in live])
        q_ln_m = ex([a.ln_m for a, _ in live])
        q_ln_m2 = ex([math.log(a.m2) if a.m2 > 0 else -math.inf for a, _ in live])
        q_surv = ex([-math.log1p(-a.q0) if a.q0 < 1 else math.inf for a, _ in live])
    return AssumptionReport(
        q_ln_m=q_ln_m, q_m=q_m, q_m_inv=q_m_inv, q_ln_m2=q_ln_m2,
        q_ln_inv_surv_mass=q_surv,
        hyp1_ok=math.isfinite(q_m + q_m_inv),
        cond_1q0_ok=math.isfinite(q_surv),
        k2_ok=q_ln_m2 < math.inf,
        violations=tuple(violations),
    )


def atoms_batch(spec: DisorderSpec, replica_ids, t, x) -> np.ndarray:
    """Atom indices for many replicas at once.

    ``replica_ids`` and ``t`` broadcast against ``x.shape[:-1]``; the result
    agrees elementwise with ``EnvironmentField(spec, r, d).atoms_at(t, x)``.
    """
    x = np.asarray(x, dtype=np.int64)
    if len(spec.atoms) == 1:
        return np.zeros(np.broadcast_shapes(np.shape(replica_ids), np.shape(t), x.shape[:-1]),
                        dtype=np.intp)
    lead = np.broadcast_shapes(np.shape(replica_ids), np.shape(t), x.shape[:-1])
    x = np.broadcast_to(x, lead + x.shape[-1:])
    u = hash_uniform(spec.master_seed, np.broadcast_to(replica_ids, lead),
                     np.broadcast_to(t, lead), x)
    return spec.atom_index(u)
