"""Force/torque actuated unicycle.

State vector ``x = [x, y, theta, v, omega]`` and input ``u = [F, T]``.
The heading is an unwrapped real number; no angle normalisation happens
anywhere in the package.

All functions accept single vectors of shape ``(5,)``/``(2,)`` or stacks
with leading batch dimensions, which the OCP solver uses to roll out many
input sequences at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NumericDomainError, PreconditionError

STATE_DIM = 5
INPUT_DIM = 2


@dataclass(frozen=True)
class UnicycleParams:
    """Physical constants and sampling period.

    Attributes
    ----------
    m : float
        Mass [kg].
    J : float
        Moment of inertia [kg m^2].
    k : float
        Linear damping [N s/m].
    kappa : float
        Angular damping [N m s/rad].
    h : float
        Step size of the discrete model [s].
    """

    m: float = 10.0
    J: float = 20.0
    k: float = 5.0
    kappa: float = 15.0
    h: float = 1.0

    def __post_init__(self):
        for name in ("m", "J", "k", "kappa", "h"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise PreconditionError(f"UnicycleParams.{name} must be a positive finite number, got {val!r}")


@dataclass
class Trajectory:
    """State/input sequence pair: ``states`` is ``(L+1, 5)``, ``inputs`` is ``(L, 2)``."""

    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float).reshape(-1, STATE_DIM)
        self.inputs = np.asarray(self.inputs, dtype=float).reshape(-1, INPUT_DIM)
        if len(self.states) != len(self.inputs) + 1:
            raise PreconditionError(
                f"trajectory has {len(self.states)} states but {len(self.inputs)} inputs"
            )

    def __len__(self):
        return len(self.inputs)

    def consistency_error(self, p: UnicycleParams) -> float:
        """Largest per-component gap between ``states[t+1]`` and ``discrete_step(states[t], inputs[t])``."""
        if len(self.inputs) == 0:
            return 0.0
        pred = discrete_step(self.states[:-1], self.inputs, p)
        return float(np.max(np.abs(pred - self.states[1:])))

    def is_consistent(self, p: UnicycleParams, atol: float = 1e-9) -> bool:
        return self.consistency_error(p) <= atol


def _check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericDomainError(f"non-finite value in {what}")
    return arr


def discrete_step(x, u, p: UnicycleParams) -> np.ndarray:
    """Euler-discretised unicycle map ``x(t+1) = f(x(t), u(t))``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    h = p.h
    px, py, th, v, om = (x[..., i] for i in range(STATE_DIM))
    F, T = u[..., 0], u[..., 1]
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.stack(
            [
                px + h * v * np.cos(th),
                py + h * v * np.sin(th),
                th + h * om,
                v + (h / p.m) * (F - p.k * v),
                om + (h / p.J) * (T - p.kappa * om),
            ],
            axis=-1,
        )
    return _check_finite(out, "discrete_step")


def rollout_discrete(x0, inputs, p: UnicycleParams) -> Trajectory:
    """Iterate :func:`discrete_step` from ``x0`` over ``inputs``."""
    x0 = np.asarray(x0, dtype=float).reshape(STATE_DIM)
    inputs = np.asarray(inputs, dtype=float).reshape(-1, INPUT_DIM)
    states = np.empty((len(inputs) + 1, STATE_DIM))
    states[0] = x0
    for t, u in enumerate(inputs):
        states[t + 1] = discrete_step(states[t], u, p)
    return Trajectory(states, inputs)


def continuous_rhs(x, u, p: UnicycleParams) -> np.ndarray:
    """Time derivative of the continuous-time unicycle."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    th, v, om = x[..., 2], x[..., 3], x[..., 4]
    with np.errstate(over="ignore", invalid="ignore"):
        return np.stack(
            [
                v * np.cos(th),
                v * np.sin(th),
                om,
                (u[..., 0] - p.k * v) / p.m,
                (u[..., 1] - p.kappa * om) / p.J,
            ],
            axis=-1,
        )


def integrate_plant(x, u, p: UnicycleParams, substeps: int = 20) -> np.ndarray:
    """Advance the continuous plant over one sampling interval ``h``.

    Classical RK4 with ``substeps`` equal sub-intervals; the input is held
    constant over the whole interval (zero-order hold).
    """
    if int(substeps) != substeps or substeps < 1:
        raise PreconditionError(f"substeps must be a positive integer, got {substeps!r}")
    x = np.asarray(x, dtype=float).copy()
    u = np.asarray(u, dtype=float)
    dt = p.h / int(substeps)
    for _ in range(int(substeps)):
        k1 = continuous_rhs(x, u, p)
        k2 = continuous_rhs(x + 0.5 * dt * k1, u, p)
        k3 = continuous_rhs(x + 0.5 * dt * k2, u, p)
        k4 = continuous_rhs(x + dt * k3, u, p)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return _check_finite(x, "integrate_plant")


def invert_velocity_inputs(v_now, v_next, omega_now, omega_next, p: UnicycleParams) -> np.ndarray:
    """Force and torque that move ``(v, omega)`` to ``(v_next, omega_next)`` in one step."""
    F = p.k * v_now + (p.m / p.h) * (v_next - v_now)
    T = p.kappa * omega_now + (p.J / p.h) * (omega_next - omega_now)
    return np.stack([np.asarray(F, dtype=float), np.asarray(T, dtype=float)], axis=-1)
