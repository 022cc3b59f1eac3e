"""Finite-horizon OCP with the average descent constraint.

minimise   sum_{i<N} f0(x_i, u_i) + F(x_N)
subject to x_{i+1} = f(x_i, u_i),
           sum_{i=1}^{N} sigma_i(x0) V(x_i) <= (1 - alpha) V(x0)

The stage cost is ``|(x, y)|^2 + |u|^2 + sum_j rho (l_j^2 + l_j)`` with
ellipse activations ``l_j``; the terminal cost is
``terminal_weight * |x_N|^2``.

The solver is single shooting over the ``N`` input vectors. The scalar
constraint is handled by an augmented penalty (quadratic penalty with a
multiplier update) and gradients come from central finite differences.
The inner problem is solved by L-BFGS (``inner="lbfgs"``, default) or by
plain gradient descent with backtracking (``inner="gd"``); the latter
stalls on the kinks of the obstacle penalty. The solver is
warm-started from the steering plan, which is always feasible, and falls
back to that plan whenever the optimiser does not return a feasible
improvement.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .egdclf import EgdclfSpec, weights
from .exceptions import NumericDomainError, PreconditionError
from .model import Trajectory, UnicycleParams, rollout_discrete
from .steering import plan_feasible

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Ellipse:
    """Region ``(p - center)^T shape (p - center) <= 1`` in the plane."""

    center: tuple
    shape: tuple

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(2)
        Q = np.asarray(self.shape, dtype=float).reshape(2, 2)
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12):
            raise PreconditionError("ellipse shape matrix must be symmetric")
        if np.linalg.eigvalsh(Q).min() <= 0:
            raise PreconditionError("ellipse shape matrix must be positive definite")
        object.__setattr__(self, "center", tuple(c.tolist()))
        object.__setattr__(self, "shape", tuple(map(tuple, Q.tolist())))

    @property
    def Q(self) -> np.ndarray:
        return np.array(self.shape)

    @property
    def p(self) -> np.ndarray:
        return np.array(self.center)


@dataclass(frozen=True)
class CostConfig:
    obstacles: tuple = ()
    rho: float = 0.0
    terminal_weight: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.rho < 0:
            raise PreconditionError("penalty weight rho must be non-negative")
        if self.terminal_weight < 0:
            raise PreconditionError("terminal_weight must be non-negative")


@dataclass(frozen=True)
class SolverOptions:
    max_outer: int = 8
    max_inner: int = 200
    mu0: float = 10.0
    growth: float = 10.0
    fd_step: float = 1e-6
    # constraint back-off, relative to (1 - alpha) V(x0)
    margin: float = 1e-6
    armijo: float = 1e-4
    max_halvings: int = 40
    gtol: float = 1e-9
    ftol: float = 1e-12
    inner: str = "lbfgs"

    def __post_init__(self):
        if self.inner not in ("gd", "lbfgs"):
            raise PreconditionError(f"inner solver must be 'gd' or 'lbfgs', got {self.inner!r}")
        if self.max_outer < 0 or self.max_inner < 1:
            raise PreconditionError("max_outer must be >= 0 and max_inner >= 1")
        if not (self.mu0 > 0 and self.growth >= 1 and self.fd_step > 0):
            raise PreconditionError("need mu0 > 0, growth >= 1 and fd_step > 0")


@dataclass
class OcpSolution:
    inputs: np.ndarray
    trajectory: Trajectory
    cost: float
    descent_residual: float
    feasible: bool
    source: str
    warm_start_cost: float = float("nan")
    outer_iterations: int = 0
    inner_iterations: int = 0

    @property
    def states(self) -> np.ndarray:
        return self.trajectory.states


def feasibility_tol(spec: EgdclfSpec, v0: float) -> float:
    return 1e-9 * max(1.0, (1.0 - spec.alpha) * v0)


# ---------------------------------------------------------------------------
# cost pieces


def obstacle_activation(pos, e: Ellipse):
    """``max(1 - (pos - c)^T Q (pos - c), 0)``; one at the centre, zero outside."""
    d = np.asarray(pos, dtype=float)[..., :2] - e.p
    quad = np.einsum("...i,ij,...j->...", d, e.Q, d)
    out = np.maximum(1.0 - quad, 0.0)
    return out if out.ndim else float(out)


def stage_cost(x, u, cfg: CostConfig):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    out = x[..., 0] ** 2 + x[..., 1] ** 2 + u[..., 0] ** 2 + u[..., 1] ** 2
    if cfg.rho > 0:
        for e in cfg.obstacles:
            act = obstacle_activation(x[..., :2], e)
            out = out + cfg.rho * (act * act + act)
    return out if np.ndim(out) else float(out)


def terminal_cost(x, cfg: CostConfig):
    x = np.asarray(x, dtype=float)
    out = cfg.terminal_weight * np.sum(x * x, axis=-1)
    return out if np.ndim(out) else float(out)


def trajectory_cost(traj: Trajectory, cfg: CostConfig) -> float:
    X, U = traj.states, traj.inputs
    return float(np.sum(stage_cost(X[:-1], U, cfg)) + terminal_cost(X[-1], cfg))


def descent_residual(states, x0, spec: EgdclfSpec) -> float:
    """``sum_i sigma_i(x0) V(x_i) - (1 - alpha) V(x0)``; non-positive means feasible."""
    X = states.states if isinstance(states, Trajectory) else np.asarray(states, dtype=float)
    if X.shape != (spec.N + 1, 5):
        raise PreconditionError(f"expected {spec.N + 1} states, got array of shape {X.shape}")
    V = spec.value(X[1:])
    return float(np.dot(weights(spec, x0), V) - (1.0 - spec.alpha) * spec.value(x0))


# ---------------------------------------------------------------------------
# batched evaluation


class _Problem:
    """Cost and residual of many input sequences at once, shape ``(B, N, 2)``."""

    def __init__(self, x0, spec: EgdclfSpec, cfg: CostConfig, p: UnicycleParams):
        self.x0 = np.asarray(x0, dtype=float)
        self.spec, self.cfg, self.p = spec, cfg, p
        self.sigma = weights(spec, x0)
        self.rhs = (1.0 - spec.alpha) * float(spec.value(x0))

    def rollout(self, U: np.ndarray) -> np.ndarray:
        p = self.p
        h = p.h
        B, N = U.shape[0], U.shape[1]
        X = np.empty((B, N + 1, 5))
        X[:, 0] = self.x0
        px, py, th, v, om = (np.full(B, c) for c in self.x0)
        for i in range(N):
            px = px + h * v * np.cos(th)
            py = py + h * v * np.sin(th)
            th = th + h * om
            v = v + (h / p.m) * (U[:, i, 0] - p.k * v)
            om = om + (h / p.J) * (U[:, i, 1] - p.kappa * om)
            X[:, i + 1, 0] = px
            X[:, i + 1, 1] = py
            X[:, i + 1, 2] = th
            X[:, i + 1, 3] = v
            X[:, i + 1, 4] = om
        return X

    def evaluate(self, U: np.ndarray):
        with np.errstate(over="ignore", invalid="ignore"):
            X = self.rollout(U)
            cost = stage_cost(X[:, :-1], U, self.cfg).sum(axis=1) + terminal_cost(X[:, -1], self.cfg)
            res = self.spec.value(X[:, 1:]) @ self.sigma - self.rhs
        cost = np.where(np.isfinite(cost), cost, np.inf)
        res = np.where(np.isfinite(res), res, np.inf)
        return cost, res


def _fd_perturbations(u: np.ndarray, fd_step: float):
    n = u.size
    delta = fd_step * np.maximum(1.0, np.abs(u))
    P = np.zeros((2 * n, n))
    idx = np.arange(n)
    P[idx, idx] = delta
    P[n + idx, idx] = -delta
    return u[None, :] + P, delta


def _auglag(cost, res, lam, mu, cost_scale, res_scale, margin):
    g = res / res_scale + margin
    pen = np.maximum(0.0, g + lam / mu)
    return cost / cost_scale + 0.5 * mu * pen * pen - lam * lam / (2.0 * mu)


def penalized_gradient(prob: _Problem, u: np.ndarray, lam, mu, cost_scale, res_scale, margin, fd_step):
    """Central-difference gradient of the augmented objective in raw input coordinates."""
    shape = (-1, prob.spec.N, 2)
    Up, delta = _fd_perturbations(u, fd_step)
    c, r = prob.evaluate(Up.reshape(shape))
    L = _auglag(c, r, lam, mu, cost_scale, res_scale, margin)
    n = u.size
    return (L[:n] - L[n:]) / (2.0 * delta)


class _Augmented:
    """Augmented objective of one outer iteration, in raw input coordinates."""

    def __init__(self, prob, lam, mu, cost_scale, res_scale, opts):
        self.prob = prob
        self.args = (lam, mu, cost_scale, res_scale, opts.margin)
        self.fd_step = opts.fd_step
        self.shape = (-1, prob.spec.N, 2)

    def evaluate(self, U):
        c, r = self.prob.evaluate(U.reshape(self.shape))
        return _auglag(c, r, *self.args), c, r

    def grad(self, u):
        return penalized_gradient(self.prob, u, *self.args, self.fd_step)


def _inner_gd(aug: _Augmented, u, s, opts):
    """Scaled gradient descent with batched backtracking.

    Returns the final point, its cost and residual, the iteration count and
    every accepted iterate as ``(cost, residual, u)``.
    """
    s2 = s * s
    L_cur, c_cur, r_cur = (a[0] for a in aug.evaluate(u[None]))
    halvings = 2.0 ** -np.arange(8)
    visited = []
    step = 1.0
    n = 0
    for n in range(1, opts.max_inner + 1):
        grad = aug.grad(u)
        if not np.all(np.isfinite(grad)):
            logger.debug("non-finite gradient after %d inner steps", n)
            break
        direction = s2 * grad
        slope = float(np.dot(grad, direction))
        if slope <= opts.gtol**2:
            logger.debug("stationary after %d inner steps", n)
            break
        accepted = False
        t0 = min(2.0 * step, 1e6)
        for block in range(opts.max_halvings // len(halvings)):
            ts = t0 * halvings * 2.0 ** (-len(halvings) * block)
            cands = u[None, :] - ts[:, None] * direction[None, :]
            L, c, r = aug.evaluate(cands)
            ok = np.flatnonzero(L <= L_cur - opts.armijo * ts * slope)
            if ok.size:
                j = ok[0]
                step, u = ts[j], cands[j]
                decrease = L_cur - L[j]
                L_cur, c_cur, r_cur = L[j], c[j], r[j]
                accepted = True
                break
        if not accepted:
            logger.debug("line search failed after %d inner steps", n)
            break
        visited.append((c_cur, r_cur, u))
        if decrease <= opts.ftol * max(1.0, abs(L_cur)):
            logger.debug("stalled after %d inner steps", n)
            break
    return u, c_cur, r_cur, n, visited


def _inner_lbfgs(aug: _Augmented, u, s, opts):
    """L-BFGS on the scaled variables ``z = u / s`` with the same FD gradient."""
    visited = []

    def fun(z):
        L, c, r = (a[0] for a in aug.evaluate((z * s)[None]))
        visited.append((c, r, z * s))
        return L

    def jac(z):
        return aug.grad(z * s) * s

    res = minimize(fun, u / s, jac=jac, method="L-BFGS-B", options={"maxiter": opts.max_inner})
    u = res.x * s
    _, c, r = (a[0] for a in aug.evaluate(u[None]))
    return u, c, r, int(res.nit), visited


_INNER = {"gd": _inner_gd, "lbfgs": _inner_lbfgs}


def _warm_start(x0, spec, cfg, p):
    plan = plan_feasible(x0, spec, p)
    traj = plan.trajectory
    res = descent_residual(traj, x0, spec)
    v0 = float(spec.value(x0))
    if res > feasibility_tol(spec, v0):
        raise NumericDomainError(f"steering warm start is infeasible (residual {res:.3e})")
    return traj, trajectory_cost(traj, cfg), res


def solve_ocp(x0, spec: EgdclfSpec, cfg: CostConfig, p: UnicycleParams, opts: SolverOptions = None) -> OcpSolution:
    """Solve the OCP from ``x0``; the returned solution always satisfies the descent constraint."""
    opts = opts or SolverOptions()
    x0 = np.asarray(x0, dtype=float).reshape(5)
    ws_traj, ws_cost, ws_res = _warm_start(x0, spec, cfg, p)
    fallback = OcpSolution(
        inputs=ws_traj.inputs.copy(),
        trajectory=ws_traj,
        cost=ws_cost,
        descent_residual=ws_res,
        feasible=True,
        source="warm_start_fallback",
        warm_start_cost=ws_cost,
    )
    v0 = float(spec.value(x0))
    if opts.max_outer <= 0 or ws_cost <= 0.0 or v0 == 0.0:
        return fallback

    prob = _Problem(x0, spec, cfg, p)
    tol = feasibility_tol(spec, v0)
    cost_scale = ws_cost
    res_scale = prob.rhs
    # per-channel variable scaling so the descent is insensitive to magnitudes
    chan = np.sqrt(np.mean(ws_traj.inputs**2, axis=0))
    chan = np.maximum(chan, 1e-6 * max(1.0, chan.max()))
    s = np.tile(chan, spec.N)
    s2 = s * s

    u = ws_traj.inputs.ravel().copy()
    best_u, best_cost = None, ws_cost
    lam, mu = 0.0, opts.mu0
    n_inner = 0
    outer = 0
    shape = (-1, spec.N, 2)

    c_cur, r_cur = (a[0] for a in prob.evaluate(u.reshape(shape)))
    inner = _INNER[opts.inner]
    for outer in range(1, opts.max_outer + 1):
        aug = _Augmented(prob, lam, mu, cost_scale, res_scale, opts)
        u, c_cur, r_cur, steps, visited = inner(aug, u, s, opts)
        n_inner += steps
        for c, r, cand in visited:
            if r <= tol and c < best_cost:
                best_u, best_cost = cand.copy(), c
        g = r_cur / res_scale + opts.margin
        lam = max(0.0, lam + mu * g)
        mu *= opts.growth

    if best_u is None:
        fallback.outer_iterations, fallback.inner_iterations = outer, n_inner
        return fallback

    U = best_u.reshape(spec.N, 2)
    traj = rollout_discrete(x0, U, p)
    res = descent_residual(traj, x0, spec)
    cost = trajectory_cost(traj, cfg)
    if not (res <= tol and cost <= ws_cost):
        logger.debug("optimizer candidate rejected (res=%.3e, cost=%.6g, ws=%.6g)", res, cost, ws_cost)
        fallback.outer_iterations, fallback.inner_iterations = outer, n_inner
        return fallback
    return OcpSolution(
        inputs=U,
        trajectory=traj,
        cost=cost,
        descent_residual=res,
        feasible=True,
        source="optimizer",
        warm_start_cost=ws_cost,
        outer_iterations=outer,
        inner_iterations=n_inner,
    )
