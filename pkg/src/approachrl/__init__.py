"""Constrained tabular RL by steering long-term vector measurements into
convex target sets with a no-regret-vs-best-response repeated game."""

from .config import (ConfigError, ExperimentConfig, build_mdp, build_oracle,
                     dump_config, load_config, target_from_spec)
from .convex import (Ball, Box, GeneratorCone, LambdaSet, LiftedCone, Polytope,
                     TargetSet, distance, lift, max_norm, project_lambda,
                     project_polar)
from .envs import generate, gridworld, random_mdp
from .mdp import (FiniteMeasurementNoise, MixedPolicy, StationaryPolicy, Trajectory,
                  VectorMDP, default_horizon, load_mdp, long_term_measurement,
                  mixed_measurement, occupancy, sample_trajectory, save_mdp,
                  scalar_long_term_reward)
from .ogd import OgdState, ogd_step, realized_regret, tuned_step_size
from .oracles import (CacheEntry, CacheLookup, OracleConfig, OracleResponse,
                      PolicyCache, best_response, estimate, init_cache,
                      positive_response)
from .solver import (FeasibilityOutcome, GameConfig, GameResult, RewardSearchResult,
                     RunTrace, distance_bound, maximize_reward, run_distance,
                     run_feasibility, run_general, solve_game, write_trace_csv)

__version__ = "0.1.0"
