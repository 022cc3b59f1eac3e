"""Flexible-step MPC with exponential generalized control Lyapunov functions for the unicycle."""
from .analysis import (
    EnvelopeParams,
    check_chain,
    check_envelope,
    envelope_params,
    prop1_demo,
    prop1_epsilon,
)
from .controller import ClosedLoopLog, mpc_run, select_flexible_step
from .egdclf import Condition, EgdclfSpec, comparison_fns, weights
from .exceptions import NoValidStepError, NumericDomainError, PreconditionError, SearchExhaustedError
from .model import Trajectory, UnicycleParams, discrete_step, integrate_plant, invert_velocity_inputs, rollout_discrete
from .ocp import CostConfig, Ellipse, OcpSolution, SolverOptions, solve_ocp
from .steering import SteerPlan, descent_certificate, plan_feasible

__version__ = "0.1.0"

__all__ = [
    "ClosedLoopLog",
    "Condition",
    "CostConfig",
    "EgdclfSpec",
    "Ellipse",
    "EnvelopeParams",
    "NoValidStepError",
    "NumericDomainError",
    "OcpSolution",
    "PreconditionError",
    "SearchExhaustedError",
    "SolverOptions",
    "SteerPlan",
    "Trajectory",
    "UnicycleParams",
    "check_chain",
    "check_envelope",
    "comparison_fns",
    "descent_certificate",
    "discrete_step",
    "envelope_params",
    "integrate_plant",
    "invert_velocity_inputs",
    "mpc_run",
    "plan_feasible",
    "prop1_demo",
    "prop1_epsilon",
    "rollout_discrete",
    "select_flexible_step",
    "solve_ocp",
    "weights",
]
