"""Short-range learning MPC for a connected leader-follower pair.

The follower tracks the leader with a condensed-QP MPC and, on top of it,
learns trajectories that keep the V2V link alive by querying a black-box
channel predictor.
"""
from .channel import (DeliveryProfile, LeaderPacket, constant_predictor, dead_zone_predictor,
                      discounted_comm_cost, effective_horizon, prune_stale, simulate_reception)
from .costs import MpcWeights, control_energy
from .dynamics import InputBounds, Trajectory, VehicleState, simulate, step, time_to_collision
from .errors import HorizonError, InfeasibleError, NoUsablePrediction, ValidationError
from .feasibility import SafetyLimits, validate_trajectory
from .lmpc import SrLmpcConfig, run, run_iteration, solve_subproblem
from .nominal import solve_nominal
from .qp import QpProblem, solve
from .safe_set import DynamicSafeSet, compute_cost_to_go, compute_cost_to_go_with_comm
from .scenario import ScenarioConfig, compare, load_config, run_scenario

__version__ = "0.1.0"
