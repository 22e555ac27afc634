"""Branching random walks in random environment and directed polymers on Z^d."""
__version__ = "0.1.0"

from .env import (AssumptionReport, DisorderSpec, EnvironmentField, OffspringLaw,
                  check_assumptions, derive_stream, law_at, moments)
from .lattice import Direction, ln_walk_prob, period, rate_function, return_probability
from .polymer import (FreeEnergyEstimate, PartitionField, directional_free_energy, evolve,
                      evolve_to, free_energy_bounds, global_free_energy, partition_bruteforce,
                      superadditivity_check, concentration_tail, weak_disorder_check)
from .brw import (PopulationState, Trajectory, TrackOptions, embedded_sw, embedded_sw_coupled,
                  local_survival_probability, martingale_track, simulate, simulate_many, step,
                  survival_probability, growth_rate)
from .genfun import (FieldOnWindow, compose, extinction_field, fixed_point_residual,
                     gf_identity_check, gw_bound, phi_step, qhat, sw_bound)
from .stats import EstimateWithCI, ConcentrationParams, concentration_bound
from .config import ExperimentConfig, preset
