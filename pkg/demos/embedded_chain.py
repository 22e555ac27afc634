"""The embedded chain along a ray is dominated by the full local population.

Particles are marked when they hit t * theta at block times; the marked
count forms a branching process in random environment, coupled on the same
randomness as the full walk, so it never exceeds the local count.
"""
import numpy as np

from brwre import DisorderSpec, Direction, derive_stream, embedded_sw_coupled

spec = DisorderSpec.mixture([{0: 0.5, 2: 0.5}, {0: 0.25, 2: 0.75}], [0.5, 0.5], master_seed=3)
theta = Direction.zero(1)
chain, full = embedded_sw_coupled(spec, theta, 4, 10, np.arange(2000), derive_stream(3, 3))

alive = full >= 0
print(f"violations of chain <= local count: {int(np.sum(alive & (chain > full)))}")
print("mean embedded count by block:", np.round(chain.mean(axis=0), 3))
print("mean local count by block:   ", np.round(np.where(alive, full, 0).mean(axis=0), 3))
