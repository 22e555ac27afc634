"""Concentration of ln Z_t around its mean as the horizon grows.

The empirical tails P(|ln Z_t - Q ln Z_t| > eps t) shrink with t. The
martingale bound is printed next to them; at small eps it is vacuous.
"""
import numpy as np

from brwre import DisorderSpec, concentration_tail

spec = DisorderSpec.mixture([{0: 0.5, 2: 0.5}, {0: 0.25, 2: 0.75}], [0.5, 0.5], master_seed=14)
tc = concentration_tail(spec, [8, 16, 32, 64], [0.02, 0.04], replicas=2000)

print(f"A = {tc.A:.4f}")
for j, eps in enumerate(tc.epsilons):
    print(f"eps={eps}")
    for t, tail, bound in zip(tc.t_values, tc.tails[:, j], tc.bounds[:, j]):
        print(f"  t={t:3d}  tail {tail:.4f}  bound {min(bound, np.inf):.4f}")
    print(f"  fitted decay rate {tc.decay_rates[j]:.4f}")
