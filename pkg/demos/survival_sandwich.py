"""Survival probability sits between two comparison processes.

The lower comparison follows the walk that stays at the origin (a branching
process in the time-varying environment at 0). The upper one is the
Galton-Watson process with the annealed offspring law.
"""
from brwre import DisorderSpec, gw_bound, survival_probability, sw_bound

spec = DisorderSpec.mixture([{0: 0.5, 2: 0.5}, {0: 0.25, 2: 0.75}], [0.5, 0.5], master_seed=13)

sw = sw_bound(spec, t_max=400, replicas=4000)
gw = gw_bound(spec)
est = survival_probability(spec, T=200, replicas_env=200, replicas_pop=20)

print(f"lower comparison  {sw.sigma:.4f} +- {sw.estimate.std_err:.4f}")
print(f"survival          {est.estimate.mean:.4f} +- {est.estimate.std_err:.4f}")
print(f"upper comparison  {gw:.4f}")
print(f"per-environment survival quantiles: {est.quantiles}")
