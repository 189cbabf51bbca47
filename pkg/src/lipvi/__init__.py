"""lipvi: certified interval bounds on a policy's discounted return.

Given logged transitions from an unknown behavior policy, the library
searches the ball of slope-bounded (Lipschitz) value functions consistent
with every logged backup and reports the largest and smallest expected
returns in that ball.  The search runs as a closed-form envelope iteration
that tightens monotonically, so stopping early still yields a valid
interval.
"""

from .baseline_is import (effective_sample_size, hoeffding_lower, is_estimate,
                          weighted_returns)
from .bellman import FrozenBellman, apply, freeze, mean_next_distance
from .envelope import (LOWER, UPPER, EnvelopeState, crossing_indices,
                       eval_batch, eval_envelope, expected_value)
from .errors import *  # noqa: F401,F403 - small, curated exception set
from .lipnorm import (estimate_reward_lipschitz, estimate_transition_lipschitz,
                      propagate, state_metric)
from .lvi import (PASS, REJECT, BoundsReport, LviConfig, TracePoint, diagnose,
                  diagnose_states, init_lower, init_upper, iterate_full,
                  iterate_subsampled, run)
from .mdp import (ConstantPolicy, DiscreteTablePolicy, Environment,
                  GaussianLinearPolicy, PendulumEnv, Policy, ReturnEstimate,
                  SwingUpPolicy, SyntheticLinearEnv, Trajectory,
                  TransitionDataset, collect, draw_init_points,
                  estimate_value_slope, calibrated_metric_scale,
                  ground_truth_return, make_env, sample_action,
                  split_trajectories, step)
from .metric import (EuclideanMetric, FeatureTableMetric, Metric, Point,
                     WeightedEuclideanMetric, covering_radius, default_probes,
                     distance, min_distances)
from .oracle import (bellman_consistency, grid_envelope_optimality, lp_bound,
                     solve_max)
from .version import VERSION

__version__ = VERSION
