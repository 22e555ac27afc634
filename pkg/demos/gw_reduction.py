"""A constant environment reduces every quantity to a Galton-Watson process.

With offspring law {0: 1/4, 2: 3/4} the mean is 1.5 and the extinction
probability solves s = 1/4 + 3/4 s^2, so the survival probability is 2/3.
"""
import math

import numpy as np

from brwre import DisorderSpec, EnvironmentField, extinction_field, global_free_energy
from brwre import survival_probability
from brwre.genfun import gw_fixed_point

spec = DisorderSpec.deterministic({0: 0.25, 2: 0.75})
law = spec.atoms[0]

gw = gw_fixed_point(law)
print(f"GW extinction fixed point      {gw.fixed_point:.12f}  (exact 1/3)")

field = extinction_field(EnvironmentField(spec, 0, 1), t_max=60)
print(f"backward composition at 0      {field.origin:.12f}  after {field.t_reached} steps")

est = survival_probability(spec, T=100, replicas_env=1, replicas_pop=4000)
lo, hi = est.estimate.ci
print(f"simulated survival             {est.estimate.mean:.4f}  99% CI [{lo:.4f}, {hi:.4f}]")

fe = global_free_energy(spec, t=50, replicas=3)
print(f"free energy                    {fe.value:.12f}  (ln 1.5 = {math.log(1.5):.12f})")
assert np.isclose(gw.fixed_point, 1 / 3) and est.estimate.contains(2 / 3)
