"""In d = 3 with mild disorder, W_t = |B_t| / Q|B_t| is a mean-one martingale.

The second-moment ratio Q[m^2]/m^2 is close to 1, which together with the
transience of the walk puts the model in weak disorder.
"""
import numpy as np

from brwre import DisorderSpec, derive_stream, martingale_track, simulate_many
from brwre import TrackOptions, weak_disorder_check

spec = DisorderSpec.mixture([{0: 0.2, 2: 0.8}, {0: 0.15, 2: 0.85}], [0.5, 0.5], master_seed=15)
print(weak_disorder_check(spec, 3))

trajs = simulate_many(spec, 3, np.arange(2000), 15, derive_stream(15, 0),
                      track=TrackOptions(partition=True))
mt = martingale_track(trajs)
for t in (1, 5, 10, 15):
    print(f"t={t:2d}  mean W {mt['mean_W'][t]:.4f} +- {mt['std_err_W'][t]:.4f}")
