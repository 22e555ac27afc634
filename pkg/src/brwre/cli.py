"""Command-line experiment harness.

Every subcommand turns an :class:`~brwre.config.ExperimentConfig` into CSV
series and JSON summaries, then writes ``run_manifest.json`` with checksums.
Artifacts depend only on (config, seed); wall-clock time lives in the
manifest alone so repeated runs give byte-identical artifacts.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from . import brw, genfun, lattice, polymer
from .config import ConfigError, ExperimentConfig, PRESETS, load_config, preset
from .env import EnvironmentField, check_assumptions, derive_stream
from .stats import EstimateWithCI, ConcentrationParams

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3
ENV_OUT = "BRWRE_OUT"
ENV_WORKERS = "BRWRE_WORKERS"
SUBCOMMANDS = ("simulate", "survival", "local-survival", "free-energy", "directional", "bounds",
               "extinction-field", "embedded-sw", "concentration", "verify")
DEFAULT_PRESET = "gw-constant"
# emitted JSON file -> schema name under brwre/schemas
OUTPUT_SCHEMAS = {"simulate.json": "simulate", "survival.json": "survival",
                  "free_energy.json": "free_energy", "directional.json": "free_energy",
                  "bounds.json": "bounds", "extinction_field.json": "extinction_field",
                  "embedded_sw.json": "embedded_sw", "concentration.json": "concentration",
                  "verify.json": "verify", "run_manifest.json": "manifest"}


# --- serialization --------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_json(obj) -> bytes:
    return (json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n").encode()


def dump_csv(columns: list[str], rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue().encode()


@dataclass
class RunResult:
    """Artifacts (file name to bytes) and the verdict of one subcommand."""

    artifacts: dict[str, bytes] = field(default_factory=dict)
    exit_code: int = EXIT_OK
    message: str = ""


@dataclass
class RunManifest:
    subcommand: str
    config_hash: str
    master_seed: int
    tool_version: str
    outputs: dict[str, str]
    wall_clock_seconds: float

    def to_dict(self) -> dict:
        return {"subcommand": self.subcommand, "config_hash": self.config_hash,
                "master_seed": self.master_seed, "tool_version": self.tool_version,
                "outputs": self.outputs, "wall_clock_seconds": self.wall_clock_seconds}


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# --- helpers ----------------------------------------------------------------------

def _need_theta(cfg: ExperimentConfig) -> lattice.Direction:
    if cfg.theta is None:
        raise ConfigError("theta", "this subcommand needs a direction")
    return cfg.direction


def _need_admissible(theta: lattice.Direction, t: int, name: str = "horizons") -> None:
    if t < 1 or not theta.admissible(t):
        raise ConfigError(name, f"{t} is not a positive multiple of the period {theta.n_theta} "
                                f"of theta={theta}")


def _opt(cfg: ExperimentConfig, key: str, default):
    return cfg.options.get(key, default)


def _estimate_dict(e: EstimateWithCI) -> dict:
    return {"estimate": e.mean, "std_err": e.std_err, "ci": list(e.ci),
            "confidence_level": e.confidence_level}


# --- subcommands --------------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig) -> RunResult:
    """Per-time population trajectories with the normalised martingale."""
    T = cfg.horizon
    theta = cfg.direction
    rng = derive_stream(cfg.seed, brw.TAG_SIMULATE)
    env_ids = np.repeat(np.arange(cfg.replicas_env), cfg.replicas_pop)
    track = brw.TrackOptions(partition=bool(_opt(cfg, "track_partition", True)), theta=theta)
    trajs = brw.simulate_many(cfg.disorder, cfg.d, env_ids, T, rng, cfg.cap, track)
    t_min = int(_opt(cfg, "t_min", min(10, T // 2)))
    rows, summary = [], []
    for i, tr in enumerate(trajs):
        env_id, pop = int(env_ids[i]), i % cfg.replicas_pop
        for r in tr.rows():
            rows.append([env_id, pop, r["t"], r["total"], r["local_count"], r["W_t"], r["ratio"]])
        slope = None
        if tr.status != "EXTINCT" and int((tr.total[t_min:] > 0).sum()) >= 3:
            slope = brw.growth_rate(tr, t_min).slope
        summary.append({"env_replica": env_id, "population": pop, "status": tr.status,
                        "status_time": tr.status_time, "growth_slope": slope})
    slopes = [s["growth_slope"] for s in summary if s["growth_slope"] is not None]
    out = {"T": T, "theta": cfg.theta, "trajectories": summary,
           "mean_growth_slope": float(np.mean(slopes)) if slopes else None,
           "survivor_fraction": float(np.mean([s["status"] != "EXTINCT" for s in summary]))}
    cols = ["env_replica", "population", "t", "total", "local_count", "W_t", "ratio"]
    return RunResult({"trajectory.csv": dump_csv(cols, rows), "simulate.json": dump_json(out)})


def _survival_out(est: brw.SurvivalEstimate, extra: dict) -> RunResult:
    out = {**est.to_dict(), **_estimate_dict(est.estimate), **extra}
    rows = [[i, float(v)] for i, v in enumerate(est.per_env)]
    return RunResult({"survival_per_env.csv": dump_csv(["env_replica", "frequency"], rows),
                      "survival.json": dump_json(out)})


def cmd_survival(cfg: ExperimentConfig) -> RunResult:
    """Survival probability to the horizon, pooled over environments."""
    est = brw.survival_probability(cfg.disorder, cfg.horizon, cfg.replicas_env, cfg.replicas_pop,
                                   cfg.cap, cfg.d, workers=cfg.workers)
    return _survival_out(est, {"kind": "global", "theta": None})


def cmd_local_survival(cfg: ExperimentConfig) -> RunResult:
    """Probability that particles occupy t*theta at every admissible time."""
    theta = _need_theta(cfg)
    _need_admissible(theta, cfg.horizon)
    est = brw.local_survival_probability(cfg.disorder, theta, cfg.horizon, cfg.replicas_env,
                                         cfg.replicas_pop, cfg.cap, workers=cfg.workers)
    return _survival_out(est, {"kind": "local", "theta": cfg.theta})


def _free_energy_out(fe: polymer.FreeEnergyEstimate, bounds, column: str, stem: str) -> RunResult:
    rows = [[int(r), fe.t, float(v * fe.t), float(v)] for r, v in zip(fe.replica_ids, fe.samples)]
    lo, hi = bounds
    slack = 3 * fe.std_err
    out = {**fe.to_dict(), "ci": list(fe.estimate.ci), "bounds": [lo, hi],
           "in_bounds": bool(lo - slack - 1e-12 <= fe.value <= hi + slack + 1e-12)}
    return RunResult({f"{stem}.csv": dump_csv(["replica_id", "t", column, "per_step_rate"], rows),
                      f"{stem}.json": dump_json(out)})


def cmd_free_energy(cfg: ExperimentConfig) -> RunResult:
    """Global quenched free energy from per-replica ln Z_t."""
    if cfg.replicas_env < 2:
        raise ConfigError("replicas_env", "free-energy needs at least 2 environment replicas")
    fe = polymer.global_free_energy(cfg.disorder, cfg.horizon, cfg.replicas_env, cfg.d)
    bounds = polymer.free_energy_bounds(cfg.disorder, lattice.Direction.zero(cfg.d))
    return _free_energy_out(fe, bounds, "ln_Z", "free_energy")


def cmd_directional(cfg: ExperimentConfig) -> RunResult:
    """Directional free energy along t*theta."""
    theta = _need_theta(cfg)
    _need_admissible(theta, cfg.horizon)
    if cfg.replicas_env < 2:
        raise ConfigError("replicas_env", "directional needs at least 2 environment replicas")
    fe = polymer.directional_free_energy(cfg.disorder, theta, cfg.horizon, cfg.replicas_env)
    bounds = polymer.free_energy_bounds(cfg.disorder, theta)
    return _free_energy_out(fe, bounds, "ln_Z_theta", "directional")


def cmd_bounds(cfg: ExperimentConfig) -> RunResult:
    """Galton-Watson and Smith-Wilkinson comparison bounds."""
    gw = genfun.gw_bound(cfg.disorder)
    sw = genfun.sw_bound(cfg.disorder, int(_opt(cfg, "sw_t_max", 400)),
                         int(_opt(cfg, "sw_replicas", 4000)))
    surv = brw.survival_probability(cfg.disorder, cfg.horizon, cfg.replicas_env, cfg.replicas_pop,
                                    cfg.cap, cfg.d, workers=cfg.workers)
    e, s = surv.estimate, sw.estimate
    ok = s.mean - 3 * s.half_width <= e.mean + 3 * e.half_width and \
        e.mean - 3 * e.half_width <= gw
    out = {"sigma_gw": gw, "sigma_sw": sw.to_dict(), "survival": surv.to_dict(),
           "sandwich_ok": bool(ok)}
    return RunResult({"bounds.json": dump_json(out)})


def cmd_extinction_field(cfg: ExperimentConfig) -> RunResult:
    """Quenched extinction probabilities on an l1 window."""
    t_max = int(_opt(cfg, "t_max", cfg.horizon))
    R = int(_opt(cfg, "window_R", t_max))
    env = EnvironmentField(cfg.disorder, int(_opt(cfg, "env_replica", 0)), cfg.d)
    res = genfun.extinction_field(env, t_max, R, float(_opt(cfg, "tol", genfun.TOL)))
    fld = res.field
    mask = fld.mask
    coords = fld.coords[mask]
    vals = fld.values[mask]
    rows = [list(map(int, c)) + [float(v)] for c, v in zip(coords, vals)]
    cols = [f"x{i + 1}" for i in range(cfg.d)] + ["delta"]
    out = {**res.to_dict(), "env_replica": env.replica_id, "window_R": R, "t_max": t_max,
           "sigma_gw": genfun.gw_bound(cfg.disorder)}
    return RunResult({"extinction_field.csv": dump_csv(cols, rows),
                      "extinction_field.json": dump_json(out)})


def cmd_embedded_sw(cfg: ExperimentConfig) -> RunResult:
    """Embedded chain along a ray, coupled with the local population."""
    theta = _need_theta(cfg)
    T = int(_opt(cfg, "block", theta.n_theta))
    _need_admissible(theta, T, "options.block")
    s_max = int(_opt(cfg, "s_max", 4))
    rng = derive_stream(cfg.seed, brw.TAG_EMBEDDED)
    env_ids = np.repeat(np.arange(cfg.replicas_env), cfg.replicas_pop)
    chain, full = brw.embedded_sw_coupled(cfg.disorder, theta, T, s_max, env_ids, rng, cfg.cap)
    rows = []
    violations = 0
    for i in range(env_ids.size):
        for s in range(s_max + 1):
            c, f = int(chain[i, s]), int(full[i, s])
            if f >= 0 and c > f:
                violations += 1
            rows.append([int(env_ids[i]), i % cfg.replicas_pop, s, s * T, c, f])
    out = {"theta": cfg.theta, "block": T, "s_max": s_max, "rows": int(env_ids.size),
           "violations": violations,
           "embedded_alive_fraction": float((chain[:, -1] > 0).mean())}
    cols = ["env_replica", "population", "s", "t", "embedded_count", "local_count"]
    return RunResult({"embedded_sw.csv": dump_csv(cols, rows), "embedded_sw.json": dump_json(out)})


def cmd_concentration(cfg: ExperimentConfig) -> RunResult:
    """Tail frequencies of ln Z_t about its mean against the bound."""
    eps = [float(e) for e in _opt(cfg, "epsilons", [0.05])]
    if cfg.replicas_env < 1000:
        raise ConfigError("replicas_env", "concentration needs at least 1000 replicas")
    form = _opt(cfg, "bound_form", "proof_derived")
    tc = polymer.concentration_tail(cfg.disorder, cfg.horizons, eps, cfg.replicas_env, cfg.d,
                                    bound_form=form)
    rows = [[int(t), float(e), float(tc.tails[i, j]), float(tc.bounds[i, j])]
            for i, t in enumerate(tc.t_values) for j, e in enumerate(tc.epsilons)]
    nonincreasing = bool(np.all(np.diff(tc.tails, axis=0) <= 0))
    out = {"A": tc.A, "B": ConcentrationParams(tc.A).B, "bound_form": form,
           "epsilons": tc.epsilons, "t_values": tc.t_values, "decay_rates": tc.decay_rates,
           "nonincreasing": nonincreasing, "below_bound": bool(np.all(tc.tails <= tc.bounds)),
           "replicas": tc.replicas}
    return RunResult({"concentration.csv": dump_csv(["t", "epsilon", "tail", "bound"], rows),
                      "concentration.json": dump_json(out)})


# --- verify ------------------------------------------------------------------------

def _check(name, value, lo, hi, detail="") -> dict:
    return {"name": name, "value": value, "low": lo, "high": hi,
            "passed": bool(value is not None and lo <= value <= hi), "detail": detail}


def cmd_verify(cfg: ExperimentConfig, suite: str = "quick") -> RunResult:
    """Consistency checks of the simulators against exact oracles.

    For a constant law every target is exact: survival equals the
    Galton-Watson probability, the free energy is ln m and survivors grow at
    rate ln m. For random laws survival is checked against the comparison
    bounds and the free energy against its bracket.
    """
    scale = 1 if suite == "quick" else 4
    spec, d = cfg.disorder, cfg.d
    rep = check_assumptions(spec)
    checks = []
    T = 100 * scale
    n_pop = 2000 * scale
    gw = genfun.gw_bound(spec)
    ln_m = math.log(spec.mean_m) if spec.mean_m > 0 else -math.inf

    if spec.is_constant:
        surv = brw.survival_probability(spec, T, 1, n_pop, cfg.cap, d)
        tol = max(0.02, 4 * surv.estimate.std_err)
        checks.append(_check("survival_vs_gw", surv.estimate.mean, gw - tol, gw + tol,
                             f"sigma_GW = {gw!r}"))
        ext = genfun.extinction_field(EnvironmentField(spec, 0, d), 400, 400 if d == 1 else 60)
        checks.append(_check("extinction_field_origin", ext.origin, 1 - gw - 1e-9, 1 - gw + 1e-9))
    else:
        surv = brw.survival_probability(spec, T, 50 * scale, 40, cfg.cap, d)
        sw = genfun.sw_bound(spec, 200 * scale, 1000 * scale)
        slack = 3 * surv.estimate.half_width
        checks.append(_check("survival_sandwich", surv.estimate.mean,
                             sw.sigma - 3 * sw.estimate.half_width - slack, gw + slack))

    fe = polymer.global_free_energy(spec, 32 * scale, 100, d)
    lo, hi = rep.q_ln_m, math.log(rep.q_m)
    checks.append(_check("free_energy_bracket", fe.value, lo - 3 * fe.std_err - 1e-12,
                         hi + 3 * fe.std_err + 1e-12, f"ln Q[m] = {hi!r}"))

    if spec.is_constant and spec.mean_m > 1:
        rng = derive_stream(cfg.seed, brw.TAG_SIMULATE, 0xF)
        trajs = brw.simulate_many(spec, d, np.zeros(400, dtype=np.int64), 60, rng, 10**6)
        slopes = [brw.growth_rate(tr, 20).slope for tr in trajs if tr.status != "EXTINCT"]
        mean_slope = float(np.mean(slopes)) if slopes else None
        checks.append(_check("growth_slope_survivors", mean_slope, ln_m - 0.05, ln_m + 0.05,
                             f"ln m = {ln_m!r}, survivors = {len(slopes)}"))

    rng = derive_stream(cfg.seed, brw.TAG_SIMULATE, 0xE)
    trajs = brw.simulate_many(spec, d, np.arange(2000 * scale) % 200, 10, rng, 10**6,
                              brw.TrackOptions(partition=True))
    mt = brw.martingale_track(trajs)
    m10, se10 = float(mt["mean_W"][10]), float(mt["std_err_W"][10])
    checks.append(_check("martingale_mean_W10", m10, 1 - 4 * se10, 1 + 4 * se10))

    ok = all(c["passed"] for c in checks)
    out = {"suite": suite, "passed": ok, "checks": checks,
           "survival": surv.estimate.mean, "sigma_gw": gw, "free_energy": fe.value,
           "ln_mean_m": ln_m}
    return RunResult({"verify.json": dump_json(out)}, EXIT_OK if ok else EXIT_VERIFY,
                     "" if ok else "violations: " +
                     ", ".join(c["name"] for c in checks if not c["passed"]))


COMMANDS: dict[str, Callable[[ExperimentConfig], RunResult]] = {
    "simulate": cmd_simulate, "survival": cmd_survival, "local-survival": cmd_local_survival,
    "free-energy": cmd_free_energy, "directional": cmd_directional, "bounds": cmd_bounds,
    "extinction-field": cmd_extinction_field, "embedded-sw": cmd_embedded_sw,
    "concentration": cmd_concentration, "verify": cmd_verify,
}


# --- driver ------------------------------------------------------------------------

def run(subcommand: str, cfg: ExperimentConfig, out_dir: str | None = None,
        suite: str = "quick") -> RunResult:
    """Run one subcommand, write artifacts and manifest into ``out_dir``."""
    if subcommand not in COMMANDS:
        raise ConfigError("subcommand", f"unknown subcommand {subcommand!r}")
    start = time.perf_counter()
    if subcommand == "verify":
        res = cmd_verify(cfg, suite)
    else:
        res = COMMANDS[subcommand](cfg)
    out_dir = out_dir or cfg.out
    os.makedirs(out_dir, exist_ok=True)
    for name, data in res.artifacts.items():
        with open(os.path.join(out_dir, name), "wb") as fh:
            fh.write(data)
    manifest = RunManifest(subcommand, cfg.hash(), cfg.seed, __version__,
                           {k: sha256(v) for k, v in sorted(res.artifacts.items())},
                           time.perf_counter() - start)
    with open(os.path.join(out_dir, "run_manifest.json"), "wb") as fh:
        fh.write(dump_json(manifest.to_dict()))
    return res


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brwre", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--preset", help=f"named preset: {', '.join(sorted(PRESETS))}")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help=f"output directory (env {ENV_OUT})")
    common.add_argument("--workers", type=int, help=f"worker processes (env {ENV_WORKERS})")
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common], help=COMMANDS[name].__doc__ and
                            COMMANDS[name].__doc__.splitlines()[0])
        if name == "verify":
            sp.add_argument("--suite", choices=("quick", "full"), default="quick")
    return p


def resolve_config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("--config", "give either --config or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset(args.preset or DEFAULT_PRESET)
    out = args.out or os.environ.get(ENV_OUT)
    workers = args.workers
    if workers is None and os.environ.get(ENV_WORKERS):
        try:
            workers = int(os.environ[ENV_WORKERS])
        except ValueError:
            raise ConfigError(ENV_WORKERS, f"not an integer: {os.environ[ENV_WORKERS]!r}") from None
    if args.seed is not None and not 0 <= args.seed < 2**64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    return cfg.with_overrides(seed=args.seed, out=out, workers=workers)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        res = run(args.subcommand, cfg, suite=getattr(args, "suite", "quick"))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if res.message:
        print(res.message, file=sys.stderr)
    print(f"{args.subcommand}: wrote {', '.join(sorted(res.artifacts))} to {cfg.out}")
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
