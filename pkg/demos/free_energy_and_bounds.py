"""Quenched free energy of the directed polymer and its explicit bounds.

Each environment replica gives one pathwise value of (1/t) ln Z_t; the
estimate is their mean. The directional value along a ray never exceeds
the global one for the same replica. At finite t the directional value
carries the walk correction (ln P(S_t = t theta)) / t + I(theta), which is
negative and of order ln t / t, so it may sit slightly below the bracket.
"""
from brwre import DisorderSpec, Direction, directional_free_energy, free_energy_bounds
from brwre import global_free_energy, ln_walk_prob, rate_function, superadditivity_check

spec = DisorderSpec.mixture([{0: 0.5, 2: 0.5}, {0: 0.25, 2: 0.75}], [0.5, 0.5], master_seed=1)
zero = Direction.zero(1)

lo, hi = free_energy_bounds(spec, zero)
print(f"bounds for the global free energy: [{lo:.4f}, {hi:.4f}]")
for t in (16, 64, 256):
    g = global_free_energy(spec, t, replicas=400)
    print(f"t={t:4d}  global {g.value:.4f} +- {g.std_err:.4f}")

for text in ("0", "1/2", "1"):
    theta = Direction.parse(text)
    t = 64 if theta.admissible(64) else 64 * theta.n_theta
    dn = directional_free_energy(spec, theta, t, replicas=200)
    lo, hi = free_energy_bounds(spec, theta)
    print(f"theta={text:4s} t={t}  directional {dn.value:.4f} +- {dn.std_err:.4f}  "
          f"bounds [{lo:.4f}, {hi:.4f}]  walk correction "
          f"{ln_walk_prob(theta, t, t_limit=t) / t + rate_function(theta):.4f}")

rep = superadditivity_check(spec, zero, 16, 16, replicas=200)
print(f"superadditivity holds in mean: {rep.ok}")
