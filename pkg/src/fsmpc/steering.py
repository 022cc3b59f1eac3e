"""Explicit eight-phase steering of the unicycle to the origin.

Given any initial state and a horizon ``N >= 8``, the plan below reaches the
origin by time ``t8 = 1 + 7T`` with ``T = floor((N - 1) / 7)``:

1. one drift step to ``(x1, y1, theta1)`` while setting ``v = 0``
2. turn the heading to zero
3. drive along the x axis to ``x = 0``
4. turn to ``-theta_bar``
5. drive a distance ``d`` to the waypoint ``(x_bar, y1 / 2)``
6. turn to ``+theta_bar``
7. reverse a distance ``d`` back to ``(0, 0)``
8. turn the heading back to zero, then rest at the origin.

Each phase lasts ``T`` steps with constant velocities; the inputs realising
the velocity jumps come from :func:`fsmpc.model.invert_velocity_inputs`. The
plan is both the feasibility witness for the OCP's descent constraint and
the solver's warm start.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .egdclf import Condition, EgdclfSpec, v2_value, weights
from .exceptions import PreconditionError
from .model import Trajectory, UnicycleParams, invert_velocity_inputs


@dataclass
class SteerPlan:
    trajectory: Trajectory
    phase_times: tuple
    T: int
    theta_bar: float
    d: float
    x1: float
    y1: float
    theta1: float
    x_bar: float
    y_bar: float

    @property
    def states(self) -> np.ndarray:
        return self.trajectory.states

    @property
    def inputs(self) -> np.ndarray:
        return self.trajectory.inputs


def turn_geometry(y1: float, cond, norm_x0: float) -> tuple:
    """Turn angle ``theta_bar`` and leg length ``d`` for the detour phases.

    The pair always satisfies ``d * sin(theta_bar) = y1 / 2`` so that the
    out-and-back legs cancel the lateral offset.
    """
    cond = Condition.parse(cond)
    a = abs(y1)
    sgn = math.copysign(1.0, y1) if y1 != 0 else 0.0
    if (cond is Condition.COND1 or norm_x0 <= 1.0) and a <= 1.0:
        return sgn * math.atan(math.sqrt(a)), 0.5 * math.sqrt(a) * math.sqrt(1.0 + a)
    return sgn * math.pi / 4.0, a / math.sqrt(2.0)


def phase_length(N: int) -> int:
    return (int(N) - 1) // 7


def plan_feasible(x0, spec: EgdclfSpec, p: UnicycleParams) -> SteerPlan:
    """Build the steering trajectory of length ``spec.N`` from ``x0``."""
    if spec.N < 8:
        raise PreconditionError("steering needs N >= 8")
    if not math.isclose(spec.h, p.h, rel_tol=1e-12):
        raise PreconditionError(f"spec step size {spec.h} differs from model step size {p.h}")
    x0 = np.asarray(x0, dtype=float).reshape(5)
    N, h = spec.N, p.h
    T = phase_length(N)
    t = [1 + i * T for i in range(8)]  # t[0] = t1, ..., t[7] = t8

    px0, py0, th0, v0, om0 = x0
    x1 = px0 + h * v0 * math.cos(th0)
    y1 = py0 + h * v0 * math.sin(th0)
    th1 = th0 + h * om0
    theta_bar, d = turn_geometry(y1, spec.condition, float(v2_value(x0)))
    x_bar = d * math.cos(-theta_bar)
    y_bar = y1 / 2.0
    hT = h * T

    X = np.zeros((N + 1, 5))
    X[0] = x0
    for s in range(T):
        f = s / T
        # turn theta1 -> 0 at the drift point
        X[t[0] + s] = (x1, y1, th1 - f * th1, 0.0, -th1 / hT)
        # drive x1 -> 0 along the x axis
        X[t[1] + s] = (x1 - f * x1, y1, 0.0, -x1 / hT, 0.0)
        # turn 0 -> -theta_bar
        X[t[2] + s] = (0.0, y1, -f * theta_bar, 0.0, -theta_bar / hT)
        # drive d along heading -theta_bar
        X[t[3] + s] = (f * d * math.cos(-theta_bar), y1 + f * d * math.sin(-theta_bar), -theta_bar, d / hT, 0.0)
        # turn -theta_bar -> theta_bar at the waypoint
        X[t[4] + s] = (x_bar, y_bar, -theta_bar + 2.0 * f * theta_bar, 0.0, 2.0 * theta_bar / hT)
        # reverse d along heading theta_bar
        X[t[5] + s] = (x_bar - f * d * math.cos(theta_bar), y_bar - f * d * math.sin(theta_bar), theta_bar, -d / hT, 0.0)
        # turn theta_bar -> 0 at the origin
        X[t[6] + s] = (0.0, 0.0, theta_bar - f * theta_bar, 0.0, -theta_bar / hT)
    # X[t8:] stays exactly zero

    U = invert_velocity_inputs(X[:-1, 3], X[1:, 3], X[:-1, 4], X[1:, 4], p)
    return SteerPlan(
        trajectory=Trajectory(X, U),
        phase_times=tuple(t),
        T=T,
        theta_bar=theta_bar,
        d=d,
        x1=x1,
        y1=y1,
        theta1=th1,
        x_bar=x_bar,
        y_bar=y_bar,
    )


@dataclass
class DescentCertificate:
    lhs: float
    rhs: float
    ok: bool
    bound: float
    max_phase_value: float
    bound_ok: bool


def step_bound(spec: EgdclfSpec, x0) -> float:
    """Upper bound on ``V`` along the steering phases."""
    if spec.condition is Condition.COND1:
        return spec.c * float(spec.value(x0))
    r = float(v2_value(x0))
    return spec.c * max(math.sqrt(r), r)


def descent_certificate(plan: SteerPlan, spec: EgdclfSpec, rtol: float = 1e-9) -> DescentCertificate:
    """Evaluate the average descent inequality and the per-phase bound on a plan."""
    X = plan.states
    x0 = X[0]
    V = spec.value(X)
    lhs = float(np.dot(weights(spec, x0), V[1:]))
    rhs = (1.0 - spec.alpha) * float(V[0])
    t1, t8 = plan.phase_times[0], plan.phase_times[7]
    vmax = float(V[t1:t8].max()) if t8 > t1 else 0.0
    bound = step_bound(spec, x0)
    return DescentCertificate(
        lhs=lhs,
        rhs=rhs,
        ok=lhs <= rhs + rtol * max(1.0, rhs),
        bound=bound,
        max_phase_value=vmax,
        bound_ok=vmax <= bound * (1.0 + rtol) + 1e-300,
    )
