"""Flexible-step MPC loop.

At each iteration the OCP is solved from the measured state, the smallest
step ``l`` with ``V(x_l) <= (1 - alpha) V(x0)`` is selected, and the first
``l`` inputs are applied open loop before re-solving.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .egdclf import EgdclfSpec
from .exceptions import NoValidStepError, PreconditionError
from .model import UnicycleParams, discrete_step, integrate_plant
from .ocp import CostConfig, SolverOptions, solve_ocp

logger = logging.getLogger(__name__)

CONTRACTION_RTOL = 1e-9


def select_flexible_step(v_values, v0: float, alpha: float, rtol: float = CONTRACTION_RTOL) -> int:
    """Smallest ``l`` (1-based) with ``v_values[l-1] <= (1 - alpha) v0`` up to ``rtol * max(1, v0)``."""
    v = np.asarray(v_values, dtype=float)
    threshold = (1.0 - alpha) * v0 + rtol * max(1.0, v0)
    hits = np.flatnonzero(v <= threshold)
    if hits.size == 0:
        raise NoValidStepError(
            f"no predicted value reaches {(1 - alpha) * v0:.6g} (min predicted {v.min():.6g})"
        )
    return int(hits[0]) + 1


@dataclass
class ClosedLoopLog:
    """Implemented trajectory of one closed-loop run.

    ``iteration_marks[k]`` is the time the OCP was solved for the k-th time;
    ``flexible_steps[k]`` the step selected there. ``predicted_values[k]``
    holds ``V`` along that iteration's predicted states ``x_0..x_N``.
    """

    states: np.ndarray
    inputs: np.ndarray
    iteration_marks: list
    flexible_steps: list
    v_values: np.ndarray
    solver_sources: list
    predicted_values: list = field(default_factory=list)
    min_weights: list = field(default_factory=list)
    plant: str = "discrete"
    truncated: bool = False

    @property
    def n_steps(self) -> int:
        return len(self.inputs)

    def iteration_of_time(self) -> np.ndarray:
        """Iteration index that produced the input applied at each time step."""
        out = np.empty(self.n_steps, dtype=int)
        for k, tau in enumerate(self.iteration_marks):
            out[tau : tau + self.flexible_steps[k]] = k
        return out

    def completed_iterations(self) -> int:
        """Iterations whose full flexible step was applied."""
        return len(self.iteration_marks) - (1 if self.truncated else 0)

    def contraction_report(self, alpha: float, rtol: float = CONTRACTION_RTOL) -> list:
        """``(k, V(tau_k), V(tau_{k+1}), ok)`` for every completed iteration on implemented states."""
        out = []
        for k in range(self.completed_iterations()):
            a = self.iteration_marks[k]
            b = a + self.flexible_steps[k]
            va, vb = float(self.v_values[a]), float(self.v_values[b])
            out.append((k, va, vb, vb <= (1.0 - alpha) * va + rtol * max(1.0, va)))
        return out

    def predicted_contraction_ok(self, alpha: float, rtol: float = CONTRACTION_RTOL) -> bool:
        for k, vals in enumerate(self.predicted_values):
            v0 = vals[0]
            if vals[self.flexible_steps[k]] > (1.0 - alpha) * v0 + rtol * max(1.0, v0):
                return False
        return True


def mpc_run(
    x0,
    spec: EgdclfSpec,
    cfg: CostConfig,
    p: UnicycleParams,
    plant: str = "discrete",
    horizon_steps: int = 100,
    *,
    substeps: int = 20,
    opts: SolverOptions = None,
    stop_norm: float = 1e-3,
    selector: Callable = select_flexible_step,
) -> ClosedLoopLog:
    """Run flexible-step MPC for at most ``horizon_steps`` implemented steps.

    ``plant="discrete"`` applies the prediction model itself;
    ``plant="continuous"`` integrates the continuous dynamics with RK4 under
    zero-order hold while predictions still use the discrete model. The run
    stops early once ``||x(t)|| <= stop_norm`` at the end of an iteration.
    """
    if int(horizon_steps) != horizon_steps or horizon_steps < 1:
        raise PreconditionError("horizon_steps must be a positive integer")
    if plant not in ("discrete", "continuous"):
        raise PreconditionError(f"plant must be 'discrete' or 'continuous', got {plant!r}")
    opts = opts or SolverOptions()

    x = np.asarray(x0, dtype=float).reshape(5).copy()
    states, inputs = [x], []
    marks, steps, sources, predicted, min_w = [], [], [], [], []
    truncated = False
    t = 0
    while t < horizon_steps:
        sol = solve_ocp(x, spec, cfg, p, opts)
        v_pred = spec.value(sol.states)
        ell = selector(v_pred[1:], float(v_pred[0]), spec.alpha)
        marks.append(t)
        steps.append(ell)
        sources.append(sol.source)
        predicted.append(np.asarray(v_pred))
        min_w.append(float(np.min(spec.weights(x))))
        for i in range(ell):
            if t >= horizon_steps:
                truncated = True
                break
            u = sol.inputs[i]
            if plant == "discrete":
                x = discrete_step(x, u, p)
            else:
                x = integrate_plant(x, u, p, substeps)
            states.append(x)
            inputs.append(u)
            t += 1
        if truncated or np.linalg.norm(x) <= stop_norm:
            break

    states = np.array(states)
    return ClosedLoopLog(
        states=states,
        inputs=np.array(inputs).reshape(-1, 2),
        iteration_marks=marks,
        flexible_steps=steps,
        v_values=np.asarray(spec.value(states)),
        solver_sources=sources,
        predicted_values=predicted,
        min_weights=min_w,
        plant=plant,
        truncated=truncated,
    )
