"""Exponential generalized control Lyapunov functions for the unicycle.

Two parameterisations are provided:

* ``Condition.COND1``: a mixed 4-norm ``V1`` whose y-exponent moves from 2
  to 4 on ``|y| in [1, 2]``, with constant weights.
* ``Condition.COND2``: the Euclidean norm ``V2 = ||x||`` with
  state-dependent weights that shrink like ``||x||**0.5`` near the origin.

Besides the functions themselves, this module produces the comparison
functions ``chi1, chi2, varphi`` and the growth constants used by the
stability envelope, and sampling-based falsifiers for the defining
properties (sandwich bound, weighted-min bound and exponential growth
bound). The average-descent property is certified constructively in
:mod:`fsmpc.steering`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import PreconditionError


class Condition(enum.IntEnum):
    COND1 = 1
    COND2 = 2

    @classmethod
    def parse(cls, value) -> "Condition":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            key = value.strip().lower().replace("_", "")
            if key in ("cond1", "1"):
                return cls.COND1
            if key in ("cond2", "2"):
                return cls.COND2
        elif value in (1, 2):
            return cls(int(value))
        raise PreconditionError(f"unknown condition {value!r}; expected 1 or 2")


# ---------------------------------------------------------------------------
# Lyapunov function values


def phi_transition(s):
    """Default y-exponent: 2 below 1, 4 above 2, quintic blend in between.

    The quintic has zero slope at both ends, so the exponent is C^1.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise PreconditionError("phi_transition is defined for s >= 0 only")
    q = np.clip(s, 1.0, 2.0)
    quintic = ((((12.0 * q - 90.0) * q + 260.0) * q - 360.0) * q + 240.0) * q - 60.0
    out = np.where(s <= 1.0, 2.0, np.where(s >= 2.0, 4.0, quintic))
    return out if out.ndim else float(out)


def validate_transition(transition: Callable, grid_size: int = 10_000, tol: float = 1e-12) -> None:
    """Reject a user transition that is not non-decreasing 2 -> 4 on a grid over [0, 3]."""
    s = np.linspace(0.0, 3.0, grid_size)
    vals = np.asarray(transition(s), dtype=float)
    if vals.shape != s.shape or not np.all(np.isfinite(vals)):
        raise PreconditionError("transition must map arrays elementwise to finite values")
    if np.any(np.diff(vals) < -tol):
        raise PreconditionError("transition must be non-decreasing")
    if np.any(np.abs(vals[s <= 1.0] - 2.0) > tol) or np.any(np.abs(vals[s >= 2.0] - 4.0) > tol):
        raise PreconditionError("transition must equal 2 on [0, 1] and 4 on [2, inf)")


def v1_value(x, transition: Callable = phi_transition):
    """``(x^4 + |y|^phi(|y|) + theta^4 + v^4 + omega^4)^(1/4)``."""
    x = np.asarray(x, dtype=float)
    ay = np.abs(x[..., 1])
    total = (
        x[..., 0] ** 4
        + ay ** transition(ay)
        + x[..., 2] ** 4
        + x[..., 3] ** 4
        + x[..., 4] ** 4
    )
    out = np.sqrt(np.sqrt(total))
    return out if out.ndim else float(out)


def v2_value(x):
    """Euclidean norm of the state."""
    out = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    return out if out.ndim else float(out)


def c_const(cond, N: int, h: float) -> float:
    """Steering bound constant of the chosen condition."""
    cond = Condition.parse(cond)
    if int(N) != N or N < 8:
        raise PreconditionError(f"horizon N must be an integer >= 8, got {N!r}")
    if not h > 0:
        raise PreconditionError(f"step size h must be positive, got {h!r}")
    if cond is Condition.COND1:
        m4 = max(7.0, N - 8.0) ** 4
        a = 32.0 * (3.0 + 16.0 * 7.0**4 / (h**4 * m4))
        b = 24.0 * h**4 + 128.0 * 7.0**4 / m4
        return max(a, b) ** 0.25
    return 2.0 * math.sqrt(1.0 + h * h) * math.sqrt(2.25 + 4.0 / (h * h * max(1.0, (N - 8.0) / 7.0) ** 2))


# ---------------------------------------------------------------------------
# comparison functions


@dataclass(frozen=True)
class KFunction:
    """``scale * r`` (linear) or ``scale * max(r**0.5, r)`` (sqrt_max)."""

    scale: float
    shape: str = "linear"

    def __post_init__(self):
        if self.shape not in ("linear", "sqrt_max"):
            raise PreconditionError(f"unknown K-function shape {self.shape!r}")
        if not self.scale > 0:
            raise PreconditionError("K-function scale must be positive")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.shape == "linear":
            out = self.scale * r
        else:
            out = self.scale * np.maximum(np.sqrt(r), r)
        return out if out.ndim else float(out)

    def inverse(self, s):
        s = np.asarray(s, dtype=float) / self.scale
        out = s if self.shape == "linear" else np.minimum(s * s, s)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class ComparisonFns:
    chi1: KFunction
    chi2: KFunction
    varphi: KFunction
    lambda_tilde: float
    mu_tilde: float

    def growth_map(self, r):
        """``chi1^{-1} o varphi``."""
        return self.chi1.inverse(self.varphi(r))

    def gamma(self, r):
        """``chi1^{-1} o varphi o chi2``."""
        return self.growth_map(self.chi2(r))


# ---------------------------------------------------------------------------
# the spec object


@dataclass(frozen=True)
class EgdclfSpec:
    """Condition choice with horizon, decay rate and step size.

    For ``COND1`` the constant weights ``sigma`` may be given as a scalar
    (used for every ``i < N``), as ``N - 1`` values, or as all ``N`` values
    with the last equal to ``1 - sum(others)``. The last weight is always
    derived.
    """

    condition: Condition
    N: int = 12
    alpha: float = 0.3
    h: float = 1.0
    sigma: Optional[Sequence[float]] = None
    transition: Callable = field(default=phi_transition, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "condition", Condition.parse(self.condition))
        if int(self.N) != self.N or self.N < 8:
            raise PreconditionError(f"N must be an integer >= 8, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        if not (0.0 < self.alpha < 1.0):
            raise PreconditionError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if not self.h > 0:
            raise PreconditionError(f"h must be positive, got {self.h!r}")
        if self.condition is Condition.COND1:
            object.__setattr__(self, "sigma", self._normalise_sigma(self.sigma))
            if self.transition is not phi_transition:
                validate_transition(self.transition)
        elif self.sigma is not None:
            raise PreconditionError("sigma overrides are only meaningful for condition 1")

    def _normalise_sigma(self, sigma) -> tuple:
        N = self.N
        if sigma is None:
            sigma = 1e-3
        arr = np.atleast_1d(np.asarray(sigma, dtype=float))
        if arr.size == 1:
            head = np.full(N - 1, float(arr[0]))
        elif arr.size == N - 1:
            head = arr
        elif arr.size == N:
            head = arr[:-1]
            if abs(arr[-1] - (1.0 - head.sum())) > 1e-12:
                raise PreconditionError("sigma_N must equal 1 - (sigma_1 + ... + sigma_{N-1})")
        else:
            raise PreconditionError(f"expected 1, {N - 1} or {N} weights, got {arr.size}")
        bound = self.sigma_bound
        if np.any(head <= 0):
            raise PreconditionError("weights must be positive")
        if np.any(head > bound * (1 + 1e-12)):
            raise PreconditionError(
                f"condition 1 requires sigma_i <= (1-alpha)/((N-1)c) = {bound:.6g} for i < N"
            )
        last = 1.0 - head.sum()
        if last <= 0:
            raise PreconditionError("derived sigma_N must be positive")
        return tuple(float(s) for s in head) + (float(last),)

    @classmethod
    def cond1(cls, N=12, alpha=0.3, h=1.0, sigma=1e-3, transition=phi_transition):
        return cls(Condition.COND1, N, alpha, h, sigma, transition)

    @classmethod
    def cond2(cls, N=12, alpha=0.3, h=1.0):
        return cls(Condition.COND2, N, alpha, h)

    @property
    def c(self) -> float:
        return c_const(self.condition, self.N, self.h)

    @property
    def sigma_bound(self) -> float:
        """Upper bound ``(1 - alpha) / ((N - 1) c)`` on the leading weights."""
        return (1.0 - self.alpha) / ((self.N - 1) * self.c)

    def value(self, x):
        if self.condition is Condition.COND1:
            return v1_value(x, self.transition)
        return v2_value(x)

    def weights(self, x0) -> np.ndarray:
        return weights(self, x0)

    def comparison_fns(self) -> ComparisonFns:
        return comparison_fns(self)


def weights(spec: EgdclfSpec, x0) -> np.ndarray:
    """Weights ``sigma_1(x0), ..., sigma_N(x0)``; they always sum to one."""
    if spec.condition is Condition.COND1:
        return np.array(spec.sigma)
    r = v2_value(x0)
    scale = math.sqrt(r) if 0.0 < r < 1.0 else 1.0
    head = np.full(spec.N - 1, spec.sigma_bound * scale)
    last = 1.0 - head.sum()
    if last <= 0:
        raise PreconditionError("derived sigma_N is not positive")
    return np.append(head, last)


def weights_batch(spec: EgdclfSpec, x0s) -> np.ndarray:
    """Vectorised :func:`weights` over a stack of states; returns ``(..., N)``."""
    x0s = np.asarray(x0s, dtype=float)
    batch = x0s.shape[:-1]
    if spec.condition is Condition.COND1:
        return np.broadcast_to(np.array(spec.sigma), batch + (spec.N,)).copy()
    r = v2_value(x0s)
    scale = np.where((r > 0) & (r < 1), np.sqrt(r), 1.0)
    head = spec.sigma_bound * scale
    out = np.empty(batch + (spec.N,))
    out[..., :-1] = np.asarray(head)[..., None]
    out[..., -1] = 1.0 - (spec.N - 1) * head
    return out


def comparison_fns(spec: EgdclfSpec) -> ComparisonFns:
    if spec.condition is Condition.COND1:
        zeta = 1.0 / min(spec.sigma)
        return ComparisonFns(
            chi1=KFunction(1.0 / 20.0, "linear"),
            chi2=KFunction(2.0, "sqrt_max"),
            varphi=KFunction(zeta, "linear"),
            lambda_tilde=1.0,
            mu_tilde=1.0,
        )
    zeta = (spec.N - 1) * spec.c
    return ComparisonFns(
        chi1=KFunction(1.0, "linear"),
        chi2=KFunction(1.0, "linear"),
        varphi=KFunction(zeta, "sqrt_max"),
        lambda_tilde=math.exp(spec.alpha / 2.0),
        mu_tilde=0.5,
    )


# ---------------------------------------------------------------------------
# property falsifiers


@dataclass
class PropertyReport:
    """Outcome of a sampled inequality check ``lhs <= rhs``.

    ``worst_slack`` is the largest normalised excess ``(lhs - rhs) / max(1, |rhs|)``
    seen; it is negative when every sample holds with margin.
    """

    name: str
    checked: int
    violations: int
    worst_slack: float
    witness: Optional[tuple] = None

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "checked": self.checked,
            "violations": self.violations,
            "worst_slack": self.worst_slack,
            "witness": None if self.witness is None else [np.asarray(w).tolist() for w in self.witness],
        }


def sample_states(n: int, seed: int = 0, r_min: float = 1e-6, r_max: float = 1e3) -> np.ndarray:
    """Random states with uniform directions and log-uniform radii, plus the origin."""
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n, 5))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.exp(rng.uniform(math.log(r_min), math.log(r_max), n))
    out = dirs * radii[:, None]
    out[0] = 0.0
    return out


def _report(name, lhs, rhs, witnesses, rtol) -> PropertyReport:
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    excess = lhs - rhs
    bad = excess > rtol * np.maximum(np.abs(lhs), np.abs(rhs))
    slack = excess / np.maximum(1.0, np.abs(rhs))
    worst = int(np.argmax(slack))
    witness = None
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        witness = tuple(w[i] for w in witnesses)
    return PropertyReport(name, int(lhs.size), int(bad.sum()), float(slack.flat[worst]), witness)


def check_p1(spec: EgdclfSpec, samples=100_000, seed: int = 0, rtol: float = 1e-12) -> list:
    """Sandwich bound ``chi1(|x|) <= V(x) <= chi2(|x|)`` on sampled states."""
    xs = samples if isinstance(samples, np.ndarray) else sample_states(samples, seed)
    fns = comparison_fns(spec)
    r = v2_value(xs)
    V = spec.value(xs)
    return [
        _report("P1-lower", fns.chi1(r), V, (xs,), rtol),
        _report("P1-upper", V, fns.chi2(r), (xs,), rtol),
    ]


def check_p3(spec: EgdclfSpec, samples=100_000, seed: int = 0, rtol: float = 1e-12) -> PropertyReport:
    """``(1 - alpha) V(x) <= varphi(V(x)) * min_i sigma_i(x)`` on sampled states."""
    xs = samples if isinstance(samples, np.ndarray) else sample_states(samples, seed)
    fns = comparison_fns(spec)
    V = spec.value(xs)
    smin = weights_batch(spec, xs).min(axis=-1)
    return _report("P3", (1.0 - spec.alpha) * V, fns.varphi(V) * smin, (xs,), rtol)


def p4_grid(spec: EgdclfSpec, n_r: int = 200, n_tau: int = 200, r_max: float = 1e3, tau_max: float = 50.0):
    r = np.concatenate([[0.0], np.geomspace(1e-6, r_max, n_r - 1)])
    tau = np.linspace(-spec.alpha, tau_max, n_tau)
    return np.meshgrid(r, tau, indexing="ij")


def check_p4(spec: EgdclfSpec, grid=None, rtol: float = 1e-12) -> PropertyReport:
    """Exponential growth bound on ``chi1^{-1} o varphi`` over an ``(r, tau)`` grid."""
    R, TAU = p4_grid(spec) if grid is None else grid
    fns = comparison_fns(spec)
    lhs = fns.growth_map(R * np.exp(-TAU))
    rhs = fns.growth_map(R) * fns.lambda_tilde * np.exp(-fns.mu_tilde * TAU)
    return _report("P4", lhs.ravel(), rhs.ravel(), (R.ravel(), TAU.ravel()), rtol)


def p4_equality_gap(spec: EgdclfSpec, grid=None) -> float:
    """Largest ``|lhs/rhs - 1|`` of the growth bound over ``r > 0`` (zero for linear maps)."""
    R, TAU = p4_grid(spec) if grid is None else grid
    fns = comparison_fns(spec)
    mask = R > 0
    lhs = fns.growth_map(R[mask] * np.exp(-TAU[mask]))
    rhs = fns.growth_map(R[mask]) * fns.lambda_tilde * np.exp(-fns.mu_tilde * TAU[mask])
    return float(np.max(np.abs(lhs / rhs - 1.0)))
