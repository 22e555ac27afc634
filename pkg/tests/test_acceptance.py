"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances and sizes are fixed in advance; seeds are fixed so every run
is reproducible.
"""
import math
import time

import numpy as np
import pytest

from brwre import brw, cli, genfun, lattice, polymer
from brwre.config import ExperimentConfig
from brwre.env import DisorderSpec, EnvironmentField, check_assumptions, derive_stream
from brwre.lattice import Direction
from brwre.stats import ConcentrationParams, concentration_bound

GW_LAW = {0: 0.25, 2: 0.75}
TWO_ATOM = DisorderSpec.mixture([{0: 0.5, 2: 0.5}, {0: 0.25, 2: 0.75}], [0.5, 0.5],
                                master_seed=2024)
SUBCRITICAL = DisorderSpec.mixture([{0: 0.6, 2: 0.4}, {0: 0.55, 2: 0.45}], [0.5, 0.5],
                                   master_seed=2024)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def test_dp_matches_enumeration(record):
    worst = 0.0
    with Timer() as tm:
        for d, t_max in ((1, 6), (2, 4)):
            for r in range(50):
                env = EnvironmentField(TWO_ATOM, r, d)
                pf = polymer.PartitionField.initial(d)
                for t in range(1, t_max + 1):
                    pf = polymer.evolve(pf, env)
                    for x, lz in pf.entries.items():
                        bf = polymer.partition_bruteforce(env, t, x)
                        worst = max(worst, abs(lz - bf) / max(1.0, abs(bf)))
    ok = worst <= 1e-10 and tm.elapsed < 10
    record(1, "DP vs enumeration", ok, f"max rel log err {worst:.2e}, {tm.elapsed:.1f}s")
    assert ok


def test_quenched_mean_identity(record):
    n, t = 100_000, 6
    env = EnvironmentField(TWO_ATOM, 3, 1)
    with Timer() as tm:
        res = brw.run_batch(TWO_ATOM, 1, np.full(n, 3), t, derive_stream(5, 1),
                            cap=np.iinfo(np.int64).max, keep_final=True)
        pf = polymer.evolve_to(env, t)
        worst, checked = 0.0, 0
        for x, lz in pf.entries.items():
            z = math.exp(lz)
            if z <= 1e-3:
                continue
            sel = np.all(res.final_sites == np.asarray(x), axis=1)
            per_row = np.bincount(res.final_rows[sel], weights=res.final_counts[sel], minlength=n)
            se = per_row.std(ddof=1) / math.sqrt(n)
            worst = max(worst, abs(per_row.mean() - z) / se)
            checked += 1
    ok = worst <= 4 and checked > 0 and tm.elapsed < 60
    record(2, "quenched mean identity", ok,
           f"max |z| {worst:.2f} over {checked} sites, {tm.elapsed:.1f}s")
    assert ok


def test_directional_exactness_axis(record):
    t, R = 64, 200
    theta = Direction.axis(1)
    with Timer() as tm:
        fe = polymer.directional_free_energy(TWO_ATOM, theta, t, R)
        worst = 0.0
        for r, rate in zip(fe.replica_ids, fe.samples):
            env = EnvironmentField(TWO_ATOM, int(r), 1)
            u = np.arange(t)
            avg = env.ln_m_at(u, u[:, None]).mean()
            worst = max(worst, abs(rate + math.log(2) - avg))
        target = check_assumptions(TWO_ATOM).q_ln_m - math.log(2)
        z = abs(fe.value - target) / fe.std_err
    ok = worst <= 1e-12 and z <= 3 and tm.elapsed < 5
    record(3, "directional exactness at e1", ok,
           f"pathwise err {worst:.1e}, ensemble |z| {z:.2f}, {tm.elapsed:.2f}s")
    assert ok


def test_rate_function(record):
    rng = np.random.default_rng(4)
    with Timer() as tm:
        i0 = lattice.rate_function([0.0])
        errs = [abs(lattice.rate_function(Direction.axis(d).as_float()) - math.log(2 * d))
                for d in (1, 2, 3)]
        e_half = abs(lattice.rate_function([0.5, 0.5]) - math.log(2))
        h = 1e-5
        worst_grad = 0.0
        for _ in range(100):
            d = int(rng.integers(1, 4))
            alpha = rng.uniform(-3, 3, d)
            theta = rng.uniform(-1, 1, d)
            theta *= rng.uniform(0, 0.95) / np.abs(theta).sum()
            fd = np.array([(lattice.legendre_objective(alpha + h * e, theta)
                            - lattice.legendre_objective(alpha - h * e, theta)) / (2 * h)
                           for e in np.eye(d)])
            worst_grad = max(worst_grad, np.max(np.abs(fd - lattice.legendre_gradient(alpha, theta))))
    ok = i0 == 0.0 and max(errs) <= 1e-6 and e_half <= 1e-6 and worst_grad <= 1e-6 and tm.elapsed < 5
    record(4, "rate function", ok,
           f"I(0)={i0}, |I(e1)-ln2d| {max(errs):.1e}, |I(1/2,1/2)-ln2| {e_half:.1e}, "
           f"grad err {worst_grad:.1e}, {tm.elapsed:.2f}s")
    assert ok


def test_free_energy_bracket(record):
    t, R = 64, 200
    with Timer() as tm:
        glob = polymer.global_free_energy(TWO_ATOM, t, R)
        lo, hi = polymer.free_energy_bounds(TWO_ATOM, Direction.zero(1))
        slack = 3 * glob.std_err
        in_bracket = lo - slack <= glob.value <= hi + slack
        dirn = polymer.directional_free_energy(TWO_ATOM, Direction.zero(1), t, R)
        pathwise = bool(np.all(dirn.samples <= glob.samples))
    ok = in_bracket and pathwise and tm.elapsed < 120
    record(5, "free-energy bracket", ok,
           f"{glob.value:.4f} +- {glob.std_err:.4f} in [{lo:.4f}, {hi:.4f}], "
           f"directional(0) <= global on all {R} replicas: {pathwise}, {tm.elapsed:.2f}s")
    assert ok


def test_gw_reduction(record):
    spec = DisorderSpec.deterministic(GW_LAW, master_seed=6)
    ln_m = math.log(1.5)
    with Timer() as tm:
        surv = brw.survival_probability(spec, 200, 1, 10_000, cap=10**6)
        ext = genfun.extinction_field(EnvironmentField(spec, 0, 1), 400)
        trajs = brw.simulate_many(spec, 1, np.zeros(2000, dtype=np.int64), 60,
                                  derive_stream(6, 3), cap=10**6)
        slopes = [brw.growth_rate(tr, 15).slope for tr in trajs if tr.status != "EXTINCT"]
        slope = float(np.mean(slopes))
    ok = (abs(surv.estimate.mean - 2 / 3) <= 0.02 and abs(ext.origin - 1 / 3) <= 1e-9
          and abs(slope - ln_m) <= 0.02 and tm.elapsed < 120)
    record(6, "Galton-Watson reduction", ok,
           f"survival {surv.estimate.mean:.4f}, delta(0) {ext.origin:.12f}, "
           f"slope {slope:.4f} ({len(slopes)} survivors), {tm.elapsed:.1f}s")
    assert ok


def test_sandwich(record):
    with Timer() as tm:
        gw = genfun.gw_bound(TWO_ATOM)
        sw = genfun.sw_bound(TWO_ATOM, t_max=400, replicas=4000)
        surv = brw.survival_probability(TWO_ATOM, 200, 200, 20)
        e = surv.estimate
        ok_order = sw.sigma - 3 * sw.estimate.half_width <= e.mean <= gw + 3 * e.half_width
    ok = abs(gw - 0.4) <= 1e-12 and ok_order and tm.elapsed < 180
    record(7, "survival sandwich", ok,
           f"sigma_SW {sw.sigma:.4f} <= survival {e.mean:.4f} +- {e.half_width:.4f} "
           f"<= sigma_GW {gw!r}, {tm.elapsed:.1f}s")
    assert ok


def test_generating_function_identity(record):
    env = EnvironmentField(TWO_ATOM, 1, 1)
    with Timer() as tm:
        res = genfun.gf_identity_check(env, genfun.FieldOnWindow.constant(1, 3, 0.5), 3, 100_000)
    ok = abs(res["z"]) <= 4 and tm.elapsed < 60
    record(8, "generating-function identity", ok,
           f"exact {res['exact']:.5f}, MC {res['mc']:.5f}, z {res['z']:.2f}, {tm.elapsed:.2f}s")
    assert ok


def test_martingale_mean(record):
    n, T = 10_000, 15
    with Timer() as tm:
        res = brw.run_batch(TWO_ATOM, 1, np.arange(n), T, derive_stream(9, 9),
                            cap=np.iinfo(np.int64).max)
        zs = []
        for t in (5, 10, 15):
            W = res.totals[:, t] / TWO_ATOM.mean_m ** t
            zs.append(abs(W.mean() - 1) / (W.std(ddof=1) / math.sqrt(n)))
    ok = max(zs) <= 3 and tm.elapsed < 60
    record(9, "martingale mean", ok,
           "|z| at t=5,10,15: " + ", ".join(f"{z:.2f}" for z in zs) + f", {tm.elapsed:.2f}s")
    assert ok


def test_concentration_decay(record):
    eps = 0.05
    with Timer() as tm:
        tc = polymer.concentration_tail(TWO_ATOM, [8, 16, 32, 64], [eps], 4000)
        tails = tc.tails[:, 0]
        bounds = tc.bounds[:, 0]
    ok = bool(np.all(np.diff(tails) <= 0) and np.all(tails <= bounds)) and tm.elapsed < 300
    record(10, "concentration decay", ok,
           f"eps={eps}, tails {np.round(tails, 4).tolist()}, "
           f"bounds {np.round(bounds, 4).tolist()}, {tm.elapsed:.1f}s")
    assert ok


def test_survival_criterion(record):
    rep = check_assumptions(TWO_ATOM)
    assert rep.q_ln_m > 0 and not TWO_ATOM.is_constant and SUBCRITICAL.mean_m < 0.9
    with Timer() as tm:
        pos = brw.survival_probability(TWO_ATOM, 200, 200, 20).estimate.mean
        neg = brw.survival_probability(SUBCRITICAL, 200, 200, 20).estimate.mean
    ok = pos > 0.2 and neg < 0.01 and tm.elapsed < 180
    record(11, "survival criterion", ok,
           f"Q[ln m]={rep.q_ln_m:.4f}: {pos:.4f}; annealed m={SUBCRITICAL.mean_m:.3f}: {neg:.4f}, "
           f"{tm.elapsed:.1f}s")
    assert ok


def test_embedded_chain_domination(record):
    violations, compared = 0, 0
    with Timer() as tm:
        for text, s_max in (("0", 20), ("1/2", 8)):
            theta = Direction.parse(text)
            chain, full = brw.embedded_sw_coupled(TWO_ATOM, theta, theta.n_theta, s_max,
                                                  np.arange(1000), derive_stream(12, len(text)))
            valid = full >= 0
            violations += int(np.sum(valid & (chain > full)))
            compared += int(valid.sum())
    ok = violations == 0 and compared > 0 and tm.elapsed < 60
    record(12, "embedded-chain domination", ok,
           f"{violations} violations over {compared} milestones, {tm.elapsed:.1f}s")
    assert ok


SMOKE = {"disorder": {"family": "mixture",
                      "params": {"laws": [{"0": 0.5, "2": 0.5}, {"0": 0.25, "2": 0.75}],
                                 "weights": [0.5, 0.5]}},
         "d": 1, "theta": "0", "horizons": [8, 16], "replicas_env": 1000, "replicas_pop": 2,
         "cap": 10000, "seed": 7,
         "options": {"sw_t_max": 50, "sw_replicas": 200, "t_max": 20, "s_max": 3,
                     "epsilons": [0.05]}}


def test_reproducibility(record, tmp_path):
    cfg = ExperimentConfig.from_dict(SMOKE)
    gw_cfg = ExperimentConfig.from_dict({**SMOKE, "disorder": {"family": "deterministic",
                                                                "params": {"law": {"0": 0.25, "2": 0.75}}}})
    differing = []
    with Timer() as tm:
        for sub in cli.SUBCOMMANDS:
            c = gw_cfg if sub == "verify" else cfg
            a = cli.run(sub, c, str(tmp_path / f"{sub}_a"))
            b = cli.run(sub, c, str(tmp_path / f"{sub}_b"))
            for name in a.artifacts:
                fa = (tmp_path / f"{sub}_a" / name).read_bytes()
                fb = (tmp_path / f"{sub}_b" / name).read_bytes()
                if fa != fb or a.artifacts[name] != b.artifacts[name]:
                    differing.append(f"{sub}/{name}")
    ok = not differing and tm.elapsed < 60
    record(13, "reproducibility", ok,
           f"{len(cli.SUBCOMMANDS)} subcommands, differing artifacts {differing or 'none'}, "
           f"{tm.elapsed:.1f}s")
    assert ok
