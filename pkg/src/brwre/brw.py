"""Forward simulation of branching random walks in random environment.

Populations are kept as counts per site; genealogies are never stored. A
particle at ``x`` at time ``t`` jumps to a uniform neighbour and is replaced
there by ``K ~ q_{t,x}`` children (the law of the departure site).

The batched engine ``run_batch`` advances many independent rows at once.
Within a step, the particles of one cell are split over the 2d directions
by a multinomial draw, then each (cell, direction) group draws its offspring
histogram from a multinomial on the law's support. Since (jump, K) are i.i.d.
across the particles of a site, this has the same distribution as sampling
particle by particle.

RNG consumption order: each step draws the direction split for all cells,
then the offspring histograms for all nonempty (cell, direction) groups,
with cells sorted by (row, mark flag, site in lexicographic order).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lattice
from .env import DisorderSpec, EnvironmentField, atoms_batch, derive_stream
from .lattice import Direction
from .stats import EstimateWithCI, SlopeFit, proportion, slope_fit

DEFAULT_CAP = 10**6

ALIVE, EXTINCT, CAPPED, LOCAL_MISS = 0, 1, 2, 3
STATUS_NAMES = {ALIVE: "ALIVE_AT_HORIZON", EXTINCT: "EXTINCT", CAPPED: "CAPPED",
                LOCAL_MISS: "LOCAL_MISS"}

# stream tags, so that experiments sharing a master seed never share randomness
TAG_SIMULATE, TAG_SURVIVAL, TAG_LOCAL, TAG_EMBEDDED, TAG_MARTINGALE, TAG_GF = range(101, 107)


# --- single population, reference stepping -------------------------------

@dataclass
class PopulationState:
    """Particle counts per site at time ``t``."""

    t: int
    counts: dict[tuple[int, ...], int]

    @classmethod
    def initial(cls, d: int, n: int = 1) -> "PopulationState":
        return cls(0, {(0,) * d: n})

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def step(pop: PopulationState, env: EnvironmentField, rng: np.random.Generator,
         threshold: int = 8) -> PopulationState:
    """Advance one generation.

    Sites holding at most ``threshold`` particles are sampled particle by
    particle; larger sites use the multinomial aggregation.
    """
    d = env.d
    steps = lattice.neighbors(d)
    out: dict[tuple[int, ...], int] = {}
    for site in sorted(pop.counts):
        n = pop.counts[site]
        if n == 0:
            continue
        law = env.law_at(pop.t, site)
        if n <= threshold:
            dest = rng.integers(0, 2 * d, size=n)
            kids = rng.choice(law.pmf.size, size=n, p=law.pmf)
            per_dir = np.bincount(dest, weights=kids, minlength=2 * d).astype(np.int64)
        else:
            split = rng.multinomial(n, np.full(2 * d, 1.0 / (2 * d)))
            per_dir = np.array([rng.multinomial(k, law.pmf) @ np.arange(law.pmf.size) if k else 0
                                for k in split], dtype=np.int64)
        for j, k in enumerate(per_dir):
            if k:
                y = tuple(int(a + b) for a, b in zip(site, steps[j]))
                out[y] = out.get(y, 0) + int(k)
    return PopulationState(pop.t + 1, out)


# --- batched engine ---------------------------------------------------------

@dataclass
class BatchResult:
    """Outcome of ``run_batch``; one row per independent population.

    ``totals[r, t]`` is |B_t| while the row is tracked, 0 after extinction
    and -1 after the row was capped or dropped.
    """

    env_ids: np.ndarray
    totals: np.ndarray
    status: np.ndarray
    status_time: np.ndarray
    local: np.ndarray | None = None
    marked_local: np.ndarray | None = None
    final_rows: np.ndarray | None = None
    final_sites: np.ndarray | None = None
    final_counts: np.ndarray | None = None

    @property
    def survived(self) -> np.ndarray:
        """Survival proxy: alive at the horizon or capped."""
        return (self.status == ALIVE) | (self.status == CAPPED)

    def final_site_counts(self, row: int) -> dict[tuple[int, ...], int]:
        sel = self.final_rows == row
        return {tuple(int(c) for c in s): int(n)
                for s, n in zip(self.final_sites[sel], self.final_counts[sel])}


class _Codec:
    """Packs (row, flag, site) into sortable int64 keys; site order is lexicographic."""

    def __init__(self, d: int, radius: int, rows: int):
        self.d = d
        self.off = radius + 1
        self.W = 2 * radius + 3
        self.cells = self.W**d
        if rows * 2 * self.cells >= 2**62:
            raise ValueError("batch too large for key encoding")

    def encode(self, rows, flags, sites):
        k = np.zeros(rows.shape, dtype=np.int64)
        for i in range(self.d):
            k = k * self.W + (sites[:, i] + self.off)
        return (rows.astype(np.int64) * 2 + flags) * self.cells + k

    def decode(self, keys):
        rest = keys % self.cells
        rf = keys // self.cells
        sites = np.empty((keys.size, self.d), dtype=np.int64)
        for i in range(self.d - 1, -1, -1):
            sites[:, i] = rest % self.W - self.off
            rest //= self.W
        return rf // 2, rf % 2, sites


def _merge(codec, rows, flags, sites, counts):
    keys = codec.encode(rows, flags, sites)
    uniq, inv = np.unique(keys, return_inverse=True)
    agg = np.bincount(inv.ravel(), weights=counts, minlength=uniq.size)
    agg = np.rint(agg).astype(np.int64)
    r, f, s = codec.decode(uniq)
    keep = agg > 0
    return r[keep], f[keep], s[keep], agg[keep]


def run_batch(spec: DisorderSpec, d: int, env_ids: Sequence[int], T: int,
              rng: np.random.Generator, *, cap: int = DEFAULT_CAP,
              theta: Direction | None = None, t_offset: int = 0,
              x_offset: Sequence[int] | None = None, initial: int = 1,
              keep_final: bool = False, mark_block: int | None = None,
              stop_on_local_miss: bool = False) -> BatchResult:
    """Simulate ``len(env_ids)`` populations for ``T`` generations.

    Row ``r`` lives in environment replica ``env_ids[r]``, seen through the
    shift ``(t, x) -> (t + t_offset, x + x_offset)``, and starts with
    ``initial`` particles at the origin.

    theta
        Record |B_{t, t theta}| at admissible times in ``local``.
    mark_block
        Coupled embedded-chain mode (requires ``theta``): every particle
        starts marked; at each multiple ``sT`` of the block length, marked
        particles away from ``sT theta`` lose their mark. Marked counts at
        milestones are the embedded chain |B*_s| and are recorded in
        ``marked_local``.
    stop_on_local_miss
        Drop a row (status LOCAL_MISS) as soon as B_{t, t theta} is empty at
        an admissible time.
    """
    env_ids = np.asarray(env_ids, dtype=np.int64)
    R = env_ids.size
    x_off = np.zeros(d, dtype=np.int64) if x_offset is None else np.asarray(x_offset, dtype=np.int64)
    if (mark_block is not None or stop_on_local_miss) and theta is None:
        raise ValueError("theta is required for local tracking")
    steps = lattice.neighbors(d)
    pmf = spec.pmf_matrix
    kvals = np.arange(pmf.shape[1])
    codec = _Codec(d, T, R)
    uniform_dirs = np.full(2 * d, 1.0 / (2 * d))

    totals = np.full((R, T + 1), -1, dtype=np.int64)
    totals[:, 0] = initial
    status = np.zeros(R, dtype=np.int8)
    status_time = np.full(R, T, dtype=np.int64)
    local = marked_local = None
    if theta is not None:
        local = np.full((R, T + 1), -1, dtype=np.int64)
        local[:, 0] = initial
    if mark_block is not None:
        marked_local = np.full((R, T // mark_block + 1), -1, dtype=np.int64)
        marked_local[:, 0] = initial

    rows = np.arange(R, dtype=np.int64)
    flags = np.full(R, 1 if mark_block is not None else 0, dtype=np.int64)
    sites = np.zeros((R, d), dtype=np.int64)
    counts = np.full(R, initial, dtype=np.int64)
    if initial > cap:
        status[:] = CAPPED
        status_time[:] = 0
        rows = rows[:0]; flags = flags[:0]; sites = sites[:0]; counts = counts[:0]

    for t in range(T):
        if rows.size:
            a = atoms_batch(spec, env_ids[rows], t + t_offset, sites + x_off)
            split = rng.multinomial(counts, uniform_dirs)
            ci, di = np.nonzero(split)
            hist = rng.multinomial(split[ci, di], pmf[a[ci]])
            kids = hist @ kvals
            live = kids > 0
            ci, di, kids = ci[live], di[live], kids[live]
            rows, flags, sites, counts = _merge(codec, rows[ci], flags[ci], sites[ci] + steps[di], kids)
        t1 = t + 1
        if mark_block is not None and t1 % mark_block == 0 and rows.size:
            target = np.asarray(theta.site(t1), dtype=np.int64)
            off = np.any(sites != target, axis=1) & (flags == 1)
            if off.any():
                flags = flags.copy()
                flags[off] = 0
                rows, flags, sites, counts = _merge(codec, rows, flags, sites, counts)
        tracked = status == ALIVE
        tot = np.bincount(rows, weights=counts, minlength=R).astype(np.int64)
        totals[tracked, t1] = tot[tracked]
        died = tracked & (tot == 0)
        status[died] = EXTINCT
        status_time[died] = t1
        totals[status == EXTINCT, t1] = 0
        if theta is not None and theta.admissible(t1):
            target = np.asarray(theta.site(t1), dtype=np.int64)
            at = np.all(sites == target, axis=1)
            loc = np.bincount(rows[at], weights=counts[at], minlength=R).astype(np.int64)
            local[tracked, t1] = loc[tracked]
            local[status == EXTINCT, t1] = 0
            if marked_local is not None and t1 % mark_block == 0:
                mk = at & (flags == 1)
                mloc = np.bincount(rows[mk], weights=counts[mk], minlength=R).astype(np.int64)
                s = t1 // mark_block
                marked_local[tracked, s] = mloc[tracked]
                marked_local[status == EXTINCT, s] = 0
            if stop_on_local_miss:
                miss = (status == ALIVE) & (loc == 0)
                status[miss] = LOCAL_MISS
                status_time[miss] = t1
        over = (status == ALIVE) & (tot > cap)
        status[over] = CAPPED
        status_time[over] = t1
        drop = status[rows] != ALIVE
        if drop.any():
            keep = ~drop
            rows, flags, sites, counts = rows[keep], flags[keep], sites[keep], counts[keep]
        if not rows.size and np.all(status != ALIVE):
            # nothing left to simulate; fill extinct rows forward
            ext = status == EXTINCT
            totals[ext, t1:] = 0
            if local is not None:
                local[ext, t1:] = np.where(
                    [theta.admissible(u) for u in range(t1, T + 1)], 0, -1)
            break

    res = BatchResult(env_ids, totals, status, status_time, local, marked_local)
    if keep_final:
        res.final_rows, res.final_sites, res.final_counts = rows, sites, counts
    return res


# --- trajectories -------------------------------------------------------------

@dataclass
class TrackOptions:
    partition: bool = False
    theta: Direction | None = None


@dataclass
class Trajectory:
    t: np.ndarray
    total: np.ndarray
    status: str
    status_time: int
    local_count: np.ndarray | None = None
    W: np.ndarray | None = None
    ratio: np.ndarray | None = None

    @property
    def alive_mask(self) -> np.ndarray:
        return self.total >= 0

    def rows(self) -> list[dict]:
        out = []
        for i, t in enumerate(self.t):
            if self.total[i] < 0:
                break
            out.append({
                "t": int(t), "total": int(self.total[i]),
                "local_count": "" if self.local_count is None or self.local_count[i] < 0
                else int(self.local_count[i]),
                "W_t": "" if self.W is None else float(self.W[i]),
                "ratio": "" if self.ratio is None else float(self.ratio[i]),
            })
        return out


def _ln_partition_series(env: EnvironmentField, T: int) -> np.ndarray:
    from .polymer import PartitionField, evolve
    out = np.zeros(T + 1)
    pf = PartitionField.initial(env.d)
    for t in range(T):
        pf = evolve(pf, env)
        out[t + 1] = pf.ln_Z_total
    return out


def _trajectory(res: BatchResult, r: int, spec: DisorderSpec, ln_z: np.ndarray | None) -> Trajectory:
    T = res.totals.shape[1] - 1
    total = res.totals[r]
    W = ratio = None
    if ln_z is not None:
        valid = total >= 0
        t = np.arange(T + 1)
        W = np.where(valid, total / spec.mean_m ** t, np.nan)
        ratio = np.where(valid, total * np.exp(-ln_z), np.nan)
    return Trajectory(np.arange(T + 1), total, STATUS_NAMES[int(res.status[r])],
                      int(res.status_time[r]),
                      None if res.local is None else res.local[r], W, ratio)


def simulate(env: EnvironmentField, T: int, cap: int = DEFAULT_CAP,
             track: TrackOptions | None = None, rng: np.random.Generator | None = None,
             population_id: int = 0) -> Trajectory:
    """One population in the fixed environment ``env``.

    Stops at extinction (EXTINCT) or once the population exceeds ``cap``
    (CAPPED). With ``track.partition`` the trajectory carries
    ``W_t = |B_t| / m^t`` and ``|B_t| / Z_t`` computed on the same environment.
    """
    if T < 1 or cap < 1:
        raise ValueError("need T >= 1 and cap >= 1")
    track = track or TrackOptions()
    if rng is None:
        rng = derive_stream(env.spec.master_seed, TAG_SIMULATE, env.replica_id, population_id)
    res = run_batch(env.spec, env.d, [env.replica_id], T, rng, cap=cap, theta=track.theta,
                    t_offset=env.t_offset, x_offset=env.x_offset)
    ln_z = _ln_partition_series(env, T) if track.partition else None
    return _trajectory(res, 0, env.spec, ln_z)


def simulate_many(spec: DisorderSpec, d: int, env_ids: Sequence[int], T: int,
                  rng: np.random.Generator, cap: int = DEFAULT_CAP,
                  track: TrackOptions | None = None) -> list[Trajectory]:
    """Independent trajectories, row ``r`` in environment replica ``env_ids[r]``."""
    track = track or TrackOptions()
    res = run_batch(spec, d, env_ids, T, rng, cap=cap, theta=track.theta)
    lnz = {}
    if track.partition:
        from .polymer import log_partition_series
        uniq = np.unique(res.env_ids)
        series = log_partition_series(spec, d, uniq, T)["total"]
        lnz = dict(zip(uniq.tolist(), series))
    return [_trajectory(res, r, spec, lnz.get(int(res.env_ids[r])) if track.partition else None)
            for r in range(len(res.env_ids))]


# --- survival -------------------------------------------------------------------

@dataclass
class SurvivalEstimate:
    """Two-level survival estimate: annealed mean and quenched spread."""

    estimate: EstimateWithCI
    capped_fraction: float
    cap_bias_bound: float
    per_env: np.ndarray = field(repr=False)
    quantiles: dict = field(default_factory=dict)
    T: int = 0
    cap: int = DEFAULT_CAP
    note: str = ""

    def to_dict(self) -> dict:
        return {"estimate": self.estimate.mean, "std_err": self.estimate.std_err,
                "ci": list(self.estimate.ci), "capped_fraction": self.capped_fraction,
                "cap_bias_bound": self.cap_bias_bound, "per_env_quantiles": self.quantiles,
                "T": self.T, "cap": self.cap, "note": self.note}


_CAP_NOTE = ("CAPPED trajectories (population > cap) are counted as surviving; "
             "cap_bias_bound = capped_fraction * (1 - sigma_SW)^cap is a heuristic, "
             "not a rigorous bound")


def _two_level(per_env: np.ndarray, n_pop: int, n_total_rows: int) -> EstimateWithCI:
    mean = float(per_env.mean())
    if per_env.size >= 2:
        se = float(per_env.std(ddof=1) / math.sqrt(per_env.size))
        if se == 0.0 and 0.0 < mean < 1.0:
            se = math.sqrt(mean * (1 - mean) / n_total_rows)
        return EstimateWithCI(mean, se, int(per_env.size))
    return proportion(mean * n_pop, n_pop)


def _blocks(replicas_env: int, block_env: int):
    for start in range(0, replicas_env, block_env):
        yield start // block_env, np.arange(start, min(start + block_env, replicas_env))


def _survival_block(spec, d, T, env_block, replicas_pop, cap, tag, block_idx, theta=None,
                    local=False):
    rng = derive_stream(spec.master_seed, tag, block_idx)
    env_ids = np.repeat(env_block, replicas_pop)
    res = run_batch(spec, d, env_ids, T, rng, cap=cap, theta=theta, stop_on_local_miss=local)
    surv = res.survived.reshape(env_block.size, replicas_pop)
    capped = (res.status == CAPPED).reshape(env_block.size, replicas_pop)
    return surv.mean(axis=1), capped.mean(axis=1)


def _map_blocks(fn, blocks, workers: int):
    if workers <= 1:
        return [fn(b) for b in blocks]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, blocks))


class _BlockTask:
    def __init__(self, **kw):
        self.kw = kw

    def __call__(self, block):
        idx, env_block = block
        return _survival_block(env_block=env_block, block_idx=idx, **self.kw)


def _cap_bias(spec: DisorderSpec, capped_fraction: float, cap: int) -> float:
    if capped_fraction == 0:
        return 0.0
    from .genfun import sw_bound
    sigma = sw_bound(spec, t_max=200, replicas=2000).estimate.mean
    return capped_fraction * (1.0 - sigma) ** cap


def survival_probability(spec: DisorderSpec, T: int, replicas_env: int, replicas_pop: int,
                         cap: int = DEFAULT_CAP, d: int = 1, block_env: int = 64,
                         workers: int = 1) -> SurvivalEstimate:
    """Frequency of the survival proxy {alive at T or capped}.

    Environments are replicas ``0..replicas_env-1``; each hosts
    ``replicas_pop`` independent populations. The standard error is taken
    across per-environment frequencies.
    """
    if min(T, replicas_env, replicas_pop, cap) < 1:
        raise ValueError("T, replica counts and cap must be >= 1")
    task = _BlockTask(spec=spec, d=d, T=T, replicas_pop=replicas_pop, cap=cap, tag=TAG_SURVIVAL)
    parts = _map_blocks(task, list(_blocks(replicas_env, block_env)), workers)
    per_env = np.concatenate([p[0] for p in parts])
    capped = float(np.concatenate([p[1] for p in parts]).mean())
    est = _two_level(per_env, replicas_pop, replicas_env * replicas_pop)
    q = {str(k): float(v) for k, v in zip((0.05, 0.25, 0.5, 0.75, 0.95),
                                          np.quantile(per_env, [0.05, 0.25, 0.5, 0.75, 0.95]))}
    return SurvivalEstimate(est, capped, _cap_bias(spec, capped, cap), per_env, q, T, cap, _CAP_NOTE)


def local_survival_probability(spec: DisorderSpec, theta: Direction, T: int, replicas_env: int,
                               replicas_pop: int, cap: int = DEFAULT_CAP, block_env: int = 64,
                               workers: int = 1) -> SurvivalEstimate:
    """Frequency of {B_{t, t theta} nonempty at every admissible t <= T}.

    Capped rows count as surviving, as in ``survival_probability``.
    """
    if not theta.admissible(T) or T < 1:
        raise ValueError(f"T={T} is not in N(theta) (period {theta.n_theta})")
    task = _BlockTask(spec=spec, d=theta.d, T=T, replicas_pop=replicas_pop, cap=cap,
                      tag=TAG_LOCAL, theta=theta, local=True)
    parts = _map_blocks(task, list(_blocks(replicas_env, block_env)), workers)
    per_env = np.concatenate([p[0] for p in parts])
    capped = float(np.concatenate([p[1] for p in parts]).mean())
    est = _two_level(per_env, replicas_pop, replicas_env * replicas_pop)
    q = {str(k): float(v) for k, v in zip((0.05, 0.25, 0.5, 0.75, 0.95),
                                          np.quantile(per_env, [0.05, 0.25, 0.5, 0.75, 0.95]))}
    return SurvivalEstimate(est, capped, _cap_bias(spec, capped, cap), per_env, q, T, cap, _CAP_NOTE)


def path_forcing_bound(law, theta: Direction, T: int) -> float:
    """Probability that one lineage follows the straight ray with a child each step.

    For theta = +e_1 this is ((1 - q(0)) / 2d)^T, a lower bound on local
    survival up to ``T`` in the constant environment ``law``.
    """
    if theta.l1 != 1 or sum(1 for f in theta.theta if f != 0) != 1:
        raise ValueError("path forcing is defined for axis directions")
    return ((1.0 - law.q0) / (2 * theta.d)) ** T


# --- embedded Smith-Wilkinson chain ---------------------------------------------

@dataclass
class EmbeddedSWState:
    s: int
    count: int
    offspring: np.ndarray = field(repr=False)
    full_count: int | None = None


def embedded_sw(env: EnvironmentField, theta: Direction, T: int, s_max: int,
                rng: np.random.Generator | None = None, cap: int = 10**5) -> list[EmbeddedSWState]:
    """The chain |B*_s| of lineages that sit at ``s T theta`` at every time ``s T``.

    Given n = |B*_{s-1}|, block ``s`` restarts n independent one-particle
    populations from ``((s-1)T, (s-1)T theta)`` in the same environment and
    counts their descendants at ``(sT, sT theta)``. The per-particle counts are
    kept in ``offspring``. Iteration stops at extinction or when n > cap.
    """
    if T < 1 or not theta.admissible(T):
        raise ValueError(f"block length {T} is not in N*(theta)")
    if rng is None:
        rng = derive_stream(env.spec.master_seed, TAG_EMBEDDED, env.replica_id)
    d = theta.d
    target = theta.site(T)
    states = [EmbeddedSWState(0, 1, np.array([1], dtype=np.int64))]
    n = 1
    for s in range(1, s_max + 1):
        if n == 0 or n > cap:
            break
        start = theta.site((s - 1) * T)
        sub = env.shifted((s - 1) * T, start)
        res = run_batch(env.spec, d, np.full(n, env.replica_id), T, rng, cap=np.iinfo(np.int64).max,
                        t_offset=sub.t_offset, x_offset=sub.x_offset, keep_final=True)
        hit = np.all(res.final_sites == np.asarray(target), axis=1)
        offspring = np.bincount(res.final_rows[hit], weights=res.final_counts[hit],
                                minlength=n).astype(np.int64)
        n = int(offspring.sum())
        states.append(EmbeddedSWState(s, n, offspring))
    return states


def embedded_sw_coupled(spec: DisorderSpec, theta: Direction, T: int, s_max: int,
                        env_ids: Sequence[int], rng: np.random.Generator,
                        cap: int = DEFAULT_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Embedded chain and full local population from the same random draws.

    Returns ``(chain, full)`` of shape ``(rows, s_max + 1)``: |B*_s| and
    |B_{sT, sT theta}| (-1 once a row is capped).
    """
    if T < 1 or not theta.admissible(T):
        raise ValueError(f"block length {T} is not in N*(theta)")
    res = run_batch(spec, theta.d, env_ids, T * s_max, rng, cap=cap, theta=theta, mark_block=T)
    full = res.local[:, ::T]
    return res.marked_local, full


# --- diagnostics ----------------------------------------------------------------

def martingale_track(trajectories: Sequence[Trajectory]) -> dict:
    """Mean of W_t across trajectories and stabilisation of |B_t|/Z_t on survivors."""
    W = np.array([tr.W for tr in trajectories], dtype=float)
    if W.ndim != 2 or np.all(np.isnan(W)):
        raise ValueError("trajectories need partition tracking")
    n = np.sum(~np.isnan(W), axis=0)
    mean = np.nanmean(W, axis=0)
    sd = np.nanstd(W, axis=0, ddof=1)
    se = sd / np.sqrt(n)
    surv = [tr for tr in trajectories if tr.status in ("ALIVE_AT_HORIZON",)]
    inc_var = None
    if len(surv) >= 2:
        ratio = np.array([tr.ratio for tr in surv])
        inc = np.diff(ratio, axis=1)
        inc_var = np.nanvar(inc, axis=0, ddof=1)
    terminal = np.array([tr.ratio[-1] for tr in surv]) if surv else np.array([])
    return {"t": trajectories[0].t, "mean_W": mean, "std_err_W": se, "n": n,
            "ratio_increment_var": inc_var,
            "terminal_ratio_quantiles": (np.quantile(terminal, [0.1, 0.5, 0.9]).tolist()
                                         if terminal.size else [])}


def growth_rate(traj: Trajectory, t_min: int = 10) -> SlopeFit:
    """Least-squares slope of ln|B_t| over the tracked part of ``[t_min, T]``."""
    if traj.status == "EXTINCT" and traj.status_time <= t_min:
        raise ValueError(f"trajectory extinct at t={traj.status_time} before t_min={t_min}")
    ok = (traj.total > 0) & (traj.t >= t_min)
    return slope_fit(traj.t[ok], np.log(traj.total[ok].astype(float)), t_min)
