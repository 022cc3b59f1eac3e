"""Stability certificates for closed-loop logs.

* :func:`envelope_params` composes the comparison functions of an
  :class:`~fsmpc.egdclf.EgdclfSpec` into the decay envelope
  ``||x(t)|| <= gamma(||x(0)||) * lam * exp(-mu t)``.
* :func:`check_envelope` measures how much of that envelope a run uses.
* :func:`prop1_epsilon` / :func:`prop1_demo` illustrate why the envelope
  gain cannot be linear near the origin: from ``(0, eps, 0, 0, 0)`` any
  controller must overshoot like ``eps ** 0.5``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controller import CONTRACTION_RTOL, ClosedLoopLog, mpc_run
from .egdclf import EgdclfSpec, KFunction, comparison_fns, weights
from .exceptions import PreconditionError, SearchExhaustedError
from .model import UnicycleParams
from .ocp import CostConfig, SolverOptions


@dataclass(frozen=True)
class EnvelopeParams:
    gamma: KFunction
    lam: float
    mu: float

    def bound(self, norm_x0: float, t) -> np.ndarray:
        return self.gamma(norm_x0) * self.lam * np.exp(-self.mu * np.asarray(t, dtype=float))


def envelope_params(spec: EgdclfSpec) -> EnvelopeParams:
    fns = comparison_fns(spec)
    # every built-in composition has the max(r^0.5, r) profile, so gamma(1) is its scale
    gamma = KFunction(float(fns.gamma(1.0)), "sqrt_max")
    return EnvelopeParams(
        gamma=gamma,
        lam=fns.lambda_tilde * math.exp(fns.mu_tilde * spec.alpha),
        mu=spec.alpha * fns.mu_tilde / spec.N,
    )


@dataclass
class EnvelopeReport:
    max_ratio: float
    worst_time: int
    passed: bool


def _states(log) -> np.ndarray:
    return log.states if isinstance(log, ClosedLoopLog) else np.asarray(log, dtype=float)


def check_envelope(log, env: EnvelopeParams, rtol: float = 1e-6) -> EnvelopeReport:
    """Largest ``||x(t)|| / (gamma(||x(0)||) lam e^{-mu t})`` over the log."""
    X = _states(log)
    if len(X) == 0:
        raise PreconditionError("empty log")
    norms = np.linalg.norm(X, axis=1)
    bound = env.bound(norms[0], np.arange(len(X)))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(norms == 0.0, 0.0, norms / bound)
    worst = int(np.argmax(ratio))
    max_ratio = float(ratio[worst])
    return EnvelopeReport(max_ratio, worst, max_ratio <= 1.0 + rtol)


def check_chain(log: ClosedLoopLog, spec: EgdclfSpec, rtol: float = CONTRACTION_RTOL) -> list:
    """Inter-sample growth bounds of every completed iteration.

    Returns ``(k, t, ok_intra, ok_growth)`` for each ``t in (tau_k, tau_{k+1}]``
    where ``ok_intra`` is ``V(x(t)) min_i sigma_i <= (1 - alpha) V(x(tau_k))``
    and ``ok_growth`` is ``V(x(t)) <= varphi(V(x(tau_k)))``.
    """
    fns = comparison_fns(spec)
    V = log.v_values
    out = []
    for k in range(log.completed_iterations()):
        a = log.iteration_marks[k]
        va = float(V[a])
        smin = float(np.min(weights(spec, log.states[a])))
        tol = rtol * max(1.0, va)
        grow = float(fns.varphi(va))
        for t in range(a + 1, a + log.flexible_steps[k] + 1):
            out.append((k, t, V[t] * smin <= (1.0 - spec.alpha) * va + tol, V[t] <= grow + tol))
    return out


# ---------------------------------------------------------------------------
# lower bound on the overshoot exponent


@dataclass(frozen=True)
class Prop1Setup:
    r: float
    q: float
    lam: float
    mu: float
    h: float
    epsilon: float
    tau: int


def prop1_tau(eps: float, q: float, lam: float, mu: float) -> int:
    """``ceil(-(1/mu) log(eps^(1-q) / (2 lam)))``, clipped at zero."""
    arg = (1.0 - q) * math.log(eps) - math.log(2.0 * lam)
    return max(0, math.ceil(-arg / mu))


def prop1_lhs(eps: float, q: float, lam: float, mu: float, h: float) -> float:
    """``tau h lam^2 eps^(2q-1)``; the construction needs this below one half."""
    return prop1_tau(eps, q, lam, mu) * h * lam * lam * math.exp((2.0 * q - 1.0) * math.log(eps))


def prop1_epsilon(r: float, q: float, lam: float, mu: float, h: float, floor: float = 1e-300) -> Prop1Setup:
    """Largest ``eps = r 2^-k`` (k >= 1) satisfying the smallness condition."""
    if not (0.5 < q <= 1.0):
        raise PreconditionError("q must satisfy 1/2 < q <= 1")
    if min(r, lam, mu, h) <= 0:
        raise PreconditionError("r, lam, mu and h must be positive")
    eps = r / 2.0
    while eps >= floor:
        if prop1_lhs(eps, q, lam, mu, h) < 0.5:
            return Prop1Setup(r, q, lam, mu, h, eps, prop1_tau(eps, q, lam, mu))
        eps /= 2.0
    raise SearchExhaustedError(f"no epsilon >= {floor:g} satisfies the condition")


@dataclass
class Prop1Report:
    epsilon: float
    overshoot_q1: float
    overshoot_qhalf: float
    log: ClosedLoopLog


def prop1_demo(
    setup,
    spec: EgdclfSpec,
    cfg: CostConfig = None,
    p: UnicycleParams = None,
    horizon_steps: int = 60,
    opts: SolverOptions = None,
) -> Prop1Report:
    """Run the controller from ``(0, eps, 0, 0, 0)`` and report normalised overshoots.

    ``setup`` is a :class:`Prop1Setup` or a bare epsilon.
    """
    eps = setup.epsilon if isinstance(setup, Prop1Setup) else float(setup)
    cfg = cfg or CostConfig()
    p = p or UnicycleParams(h=spec.h)
    log = mpc_run(
        [0.0, eps, 0.0, 0.0, 0.0], spec, cfg, p, "discrete", horizon_steps, opts=opts, stop_norm=1e-3 * eps
    )
    peak = float(np.max(np.linalg.norm(log.states, axis=1)))
    return Prop1Report(eps, peak / eps, peak / math.sqrt(eps), log)


def prop1_scaling(epsilons, spec: EgdclfSpec, cfg: CostConfig = None, p: UnicycleParams = None, **kw) -> list:
    return [prop1_demo(eps, spec, cfg, p, **kw) for eps in epsilons]
