"""Batch property suites behind ``fsmpc verify``.

Every suite returns a JSON-serialisable dict ``{"suite", "passed", "checks"}``
where each check carries its own ``passed`` flag and, on failure, a witness.
Per-sample randomness comes from ``SeedSequence(seed).spawn`` so results do
not depend on the worker count or on scheduling order.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .analysis import check_chain, check_envelope, envelope_params, prop1_demo, prop1_epsilon, prop1_lhs
from .controller import mpc_run
from .egdclf import EgdclfSpec, check_p1, check_p3, check_p4, p4_equality_gap, sample_states
from .exceptions import NumericDomainError
from .model import UnicycleParams
from .ocp import CostConfig, SolverOptions, descent_residual
from .steering import descent_certificate, plan_feasible

SUITES = ("egdclf", "steering", "envelope", "prop1")
PROP1_EPSILONS = (1e-1, 1e-2, 1e-3, 1e-4)


def random_initial_state(rng: np.random.Generator, r_min: float, r_max: float) -> np.ndarray:
    """Uniform direction with a log-uniform radius in ``[r_min, r_max]``."""
    d = rng.standard_normal(5)
    d /= np.linalg.norm(d)
    return d * math.exp(rng.uniform(math.log(r_min), math.log(r_max)))


def sample_rngs(seed: int, n: int) -> list:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _map(fn, items, workers: int) -> list:
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _check(name: str, passed: bool, **info) -> dict:
    return {"name": name, "passed": bool(passed), **info}


def _specs(spec: EgdclfSpec = None) -> list:
    return [spec] if spec is not None else [EgdclfSpec.cond1(), EgdclfSpec.cond2()]


def _tag(spec: EgdclfSpec) -> str:
    return f"cond{int(spec.condition)}"


# ---------------------------------------------------------------------------


def suite_egdclf(spec=None, samples: int = 100_000, seed: int = 0, **_) -> list:
    checks = []
    for s in _specs(spec):
        xs = sample_states(samples, seed)
        for rep in [*check_p1(s, xs), check_p3(s, xs), check_p4(s)]:
            checks.append(_check(f"{_tag(s)}/{rep.name}", rep.passed, **{k: v for k, v in rep.as_dict().items() if k not in ("name", "passed")}))
        fns = s.comparison_fns()
        if fns.lambda_tilde == 1.0 and fns.mu_tilde == 1.0:
            gap = p4_equality_gap(s)
            checks.append(_check(f"{_tag(s)}/P4-equality", gap <= 1e-12, max_rel_gap=gap))
    return checks


def steering_sample(x0, spec: EgdclfSpec, p: UnicycleParams) -> dict:
    plan = plan_feasible(x0, spec, p)
    cert = descent_certificate(plan, spec)
    end_zero = bool(np.all(plan.states[plan.phase_times[7]:] == 0.0))
    consistent = plan.trajectory.is_consistent(p)
    res = descent_residual(plan.states, x0, spec)
    return {
        "ok": cert.ok and cert.bound_ok and end_zero and consistent,
        "descent_ok": cert.ok,
        "bound_ok": cert.bound_ok,
        "reaches_origin": end_zero,
        "consistent": consistent,
        "residual": res,
        "bound_ratio": cert.max_phase_value / cert.bound if cert.bound > 0 else 0.0,
    }


def suite_steering(spec=None, samples: int = 1000, seed: int = 0, workers: int = 1, r_max: float = 100.0, **_) -> list:
    checks = []
    for s in _specs(spec):
        p = UnicycleParams(h=s.h)
        x0s = [random_initial_state(rng, 1e-6, r_max) for rng in sample_rngs(seed, samples)]
        results = _map(lambda x0: steering_sample(x0, s, p), x0s, workers)
        bad = [i for i, r in enumerate(results) if not r["ok"]]
        info = {
            "checked": samples,
            "violations": len(bad),
            "max_bound_ratio": max(r["bound_ratio"] for r in results),
            "max_scaled_residual": max(r["residual"] / max(1.0, np.linalg.norm(x)) for r, x in zip(results, x0s)),
        }
        if bad:
            info["witness"] = {"x0": x0s[bad[0]].tolist(), **results[bad[0]]}
        checks.append(_check(f"{_tag(s)}/descent-certificate", not bad, **info))
    return checks


def closed_loop_sample(x0, spec: EgdclfSpec, p: UnicycleParams, steps: int, opts: SolverOptions = None) -> dict:
    log = mpc_run(x0, spec, CostConfig(), p, "discrete", steps, opts=opts)
    contraction = log.contraction_report(spec.alpha)
    env = check_envelope(log, envelope_params(spec))
    chain = check_chain(log, spec)
    return {
        "contraction_ok": all(c[3] for c in contraction),
        "iterations": len(contraction),
        "envelope_ok": env.passed,
        "envelope_ratio": env.max_ratio,
        "chain_ok": all(c[2] and c[3] for c in chain),
    }


def suite_envelope(
    spec=None, samples: int = 4, seed: int = 0, workers: int = 1, steps: int = 48, r_min: float = 1e-2, r_max: float = 20.0, **_
) -> list:
    checks = []
    for s in _specs(spec):
        p = UnicycleParams(h=s.h)
        x0s = [random_initial_state(rng, r_min, r_max) for rng in sample_rngs(seed, samples)]
        results = _map(lambda x0: closed_loop_sample(x0, s, p, steps), x0s, workers)
        for key, name in (("contraction_ok", "contraction"), ("envelope_ok", "envelope"), ("chain_ok", "growth-chain")):
            bad = [i for i, r in enumerate(results) if not r[key]]
            info = {"checked": samples, "violations": len(bad)}
            if key == "envelope_ok":
                info["max_ratio"] = max(r["envelope_ratio"] for r in results)
            if bad:
                info["witness"] = {"x0": x0s[bad[0]].tolist(), **results[bad[0]]}
            checks.append(_check(f"{_tag(s)}/{name}", not bad, **info))
    return checks


def suite_prop1(spec=None, epsilons=PROP1_EPSILONS, steps: int = 60, **_) -> list:
    s = spec if spec is not None else EgdclfSpec.cond2()
    env = envelope_params(s)
    const = env.gamma.scale * env.lam
    reports = [prop1_demo(eps, s, horizon_steps=steps) for eps in epsilons]
    table = []
    prev = None
    for rep in reports:
        ratio = None if prev is None else rep.overshoot_q1 / prev
        table.append({"epsilon": rep.epsilon, "overshoot_q1": rep.overshoot_q1, "overshoot_qhalf": rep.overshoot_qhalf, "q1_growth": ratio})
        prev = rep.overshoot_q1
    growth = [row["q1_growth"] for row in table if row["epsilon"] < 0.5e-2]
    checks = [
        _check("q1-overshoot-growth", all(g is not None and g >= 3.0 for g in growth), table=table),
        _check("qhalf-overshoot-bounded", all(r.overshoot_qhalf <= const for r in reports), envelope_constant=const),
    ]
    setup = prop1_epsilon(1.0, 0.75, env.lam, env.mu, s.h)
    lhs = prop1_lhs(setup.epsilon, setup.q, setup.lam, setup.mu, setup.h)
    checks.append(_check("epsilon-condition", lhs < 0.5, epsilon=setup.epsilon, tau=setup.tau, lhs=lhs))
    return checks


_SUITE_FNS = {"egdclf": suite_egdclf, "steering": suite_steering, "envelope": suite_envelope, "prop1": suite_prop1}


def run_suite(name: str, spec: EgdclfSpec = None, samples: int = None, seed: int = 0, workers: int = 1) -> dict:
    """Run one named suite (or ``"all"``) and return its report."""
    names = SUITES if name == "all" else (name,)
    if any(n not in _SUITE_FNS for n in names):
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)} or all")
    checks = []
    for n in names:
        kw = {"spec": spec, "seed": seed, "workers": workers}
        if samples is not None:
            kw["samples"] = samples
        try:
            sub = _SUITE_FNS[n](**kw)
        except NumericDomainError as exc:
            sub = [_check("numeric-domain", False, error=str(exc))]
        checks.extend({**c, "name": f"{n}/{c['name']}"} for c in sub)
    return {"suite": name, "seed": seed, "passed": all(c["passed"] for c in checks), "checks": checks}
