"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from fsmpc.analysis import check_envelope, envelope_params, prop1_epsilon, prop1_lhs
from fsmpc.artifacts import trajectory_svg
from fsmpc.cli import main
from fsmpc.config import load_config
from fsmpc.controller import mpc_run, select_flexible_step
from fsmpc.egdclf import EgdclfSpec, check_p1, check_p3, check_p4, p4_equality_gap
from fsmpc.model import UnicycleParams, discrete_step, invert_velocity_inputs
from fsmpc.ocp import CostConfig, obstacle_activation
from fsmpc.steering import descent_certificate, plan_feasible
from fsmpc.verify import random_initial_state, sample_rngs, suite_prop1

P = UnicycleParams()
SPECS = {"cond1": EgdclfSpec.cond1(), "cond2": EgdclfSpec.cond2()}
CLOSED_LOOP_RUNS = 100
CLOSED_LOOP_STEPS = 48


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return emit


@pytest.fixture(scope="module")
def steering_samples():
    t0 = time.perf_counter()
    out = {}
    for name, spec in SPECS.items():
        rows = []
        for rng in sample_rngs(2024, 1000):
            x0 = random_initial_state(rng, 1e-6, 100.0)
            plan = plan_feasible(x0, spec, P)
            rows.append((x0, plan, descent_certificate(plan, spec)))
        out[name] = rows
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def closed_loop_logs():
    logs = {}
    for name, spec in SPECS.items():
        logs[name] = [
            mpc_run(random_initial_state(rng, 1e-2, 20.0), spec, CostConfig(), P, "discrete", CLOSED_LOOP_STEPS)
            for rng in sample_rngs(77, CLOSED_LOOP_RUNS)
        ]
    return logs


def test_criterion_1_feasibility(steering_samples, report):
    samples, elapsed = steering_samples
    worst, ok = -np.inf, True
    for name, rows in samples.items():
        spec = SPECS[name]
        for x0, plan, cert in rows:
            assert np.linalg.norm(x0) <= 100.0
            scale = max(1.0, cert.rhs)
            worst = max(worst, (cert.lhs - cert.rhs) / scale)
            ok &= plan.trajectory.is_consistent(P)
            ok &= bool(np.all(plan.states[-1] == 0.0))
            ok &= cert.lhs - cert.rhs <= 1e-9 * scale
    ok &= elapsed <= 10.0
    report(1, ok, f"2x1000 plans, worst scaled residual {worst:.3e}, {elapsed:.2f}s")
    assert ok


def test_criterion_2_phase_bound(steering_samples, report):
    samples, _ = steering_samples
    assert SPECS["cond1"].c == pytest.approx(608**0.25, rel=1e-14)
    assert SPECS["cond2"].c == pytest.approx(5 * math.sqrt(2), rel=1e-14)
    ratios = {name: max(cert.max_phase_value / cert.bound for x0, _, cert in rows if cert.bound > 0) for name, rows in samples.items()}
    ok = all(r <= 1.0 + 1e-9 for r in ratios.values())
    ok &= all(cert.bound_ok for rows in samples.values() for _, _, cert in rows)
    report(2, ok, f"max V/bound cond1 {ratios['cond1']:.4f}, cond2 {ratios['cond2']:.4f}")
    assert ok


def test_criterion_3_contraction(closed_loop_logs, report):
    bad, iters = 0, 0
    for name, logs in closed_loop_logs.items():
        alpha = SPECS[name].alpha
        for log in logs:
            for _, va, vb, _ in log.contraction_report(alpha):
                iters += 1
                bad += not (vb <= (1 - alpha) * va + 1e-9 * max(1.0, va))
    ok = bad == 0 and iters > 0
    report(3, ok, f"{2 * CLOSED_LOOP_RUNS} runs, {iters} iterations, {bad} violations")
    assert ok


def test_criterion_4_envelope(closed_loop_logs, report):
    e1, e2 = envelope_params(SPECS["cond1"]), envelope_params(SPECS["cond2"])
    assert e1.gamma.scale == pytest.approx(40000) and e2.gamma.scale == pytest.approx(11 * 5 * math.sqrt(2))
    assert e1.lam == pytest.approx(math.exp(0.3)) and e2.lam == pytest.approx(math.exp(0.3))
    assert e1.mu == pytest.approx(0.025) and e2.mu == pytest.approx(0.0125)
    worst = {}
    for name, logs in closed_loop_logs.items():
        env = envelope_params(SPECS[name])
        worst[name] = max(check_envelope(log, env, rtol=0.0).max_ratio for log in logs)
    ok = all(v <= 1.0 for v in worst.values())
    report(4, ok, f"max ratio cond1 {worst['cond1']:.3e}, cond2 {worst['cond2']:.3e}")
    assert ok


@pytest.mark.parametrize("preset", ["sec6-cond1", "sec6-cond2"])
def test_criterion_5_obstacle_presets(preset, report, tmp_path):
    cfg = load_config(preset=preset)
    spec, cost = cfg.spec(), cfg.cost_config()
    t0 = time.perf_counter()
    log = mpc_run(cfg.x0(), spec, cost, cfg.params(), "continuous", 300, substeps=20, opts=cfg.solver_options(), stop_norm=1e-3)
    elapsed = time.perf_counter() - t0
    norms = np.linalg.norm(log.states, axis=1)
    hit = np.flatnonzero(norms <= 1e-2)
    after = log.states[log.flexible_steps[0]:]
    act = max(float(np.max(obstacle_activation(after, e))) for e in cost.obstacles)
    svg = trajectory_svg(log.states, cost.obstacles)
    (tmp_path / f"{preset}.svg").write_text(svg)
    ok = hit.size > 0 and hit[0] <= 300 and act == 0.0 and elapsed <= 60.0
    ok &= svg.count('class="obstacle"') == 2
    first = int(hit[0]) if hit.size else -1
    report(5, ok, f"{preset}: |x|<=1e-2 at step {first}, max activation after first iteration {act:g}, {elapsed:.1f}s")
    assert ok


def test_criterion_6_prop1(report):
    checks = {c["name"]: c for c in suite_prop1()}
    table = checks["q1-overshoot-growth"]["table"]
    growth = [row["q1_growth"] for row in table if row["epsilon"] < 0.5e-2]
    env = envelope_params(SPECS["cond2"])
    const = env.gamma.scale * env.lam
    ok = all(g >= 3.0 for g in growth) and all(row["overshoot_qhalf"] <= const for row in table)
    for q in (0.51, 0.75, 1.0):
        s = prop1_epsilon(1.0, q, env.lam, env.mu, 1.0)
        tau = math.ceil(-(1 / s.mu) * math.log(s.epsilon ** (1 - q) / (2 * s.lam)))
        ok &= s.tau == max(0, tau)
        ok &= s.tau * s.h * s.lam**2 * s.epsilon ** (2 * q - 1) < 0.5
        ok &= prop1_lhs(s.epsilon, q, s.lam, s.mu, s.h) < 0.5
    detail = ", ".join(f"eps={row['epsilon']:g}: {row['overshoot_q1']:.2f}/{row['overshoot_qhalf']:.2f}" for row in table)
    report(6, ok, f"q1/qhalf overshoot {detail}; growth {', '.join(f'{g:.2f}' for g in growth)}")
    assert ok


def test_criterion_7_properties(report):
    details = []
    ok = True
    for name, spec in SPECS.items():
        reps = [*check_p1(spec, 100_000, seed=9), check_p3(spec, 100_000, seed=9), check_p4(spec)]
        assert reps[-1].checked == 200 * 200
        ok &= all(r.passed for r in reps)
        details.append(f"{name} falsifications {sum(r.violations for r in reps)}")
    gap = p4_equality_gap(SPECS["cond1"])
    ok &= gap <= 1e-12
    report(7, ok, f"{', '.join(details)}, cond1 P4 equality gap {gap:.1e}")
    assert ok


def test_criterion_8_oracles(report):
    rng = np.random.default_rng(8)
    mism = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 13))
        alpha = float(rng.uniform(0.05, 0.95))
        v0 = float(np.exp(rng.uniform(-5, 5)))
        vals = v0 * rng.uniform(0, 2, n)
        vals[rng.integers(n)] = v0 * (1 - alpha) * rng.uniform(0, 1)  # guarantee a valid step
        thr = (1 - alpha) * v0 + 1e-9 * max(1.0, v0)
        oracle = next(i + 1 for i in range(n) if vals[i] <= thr)
        mism += select_flexible_step(vals, v0, alpha) != oracle
    v_now, v_next, w_now, w_next = (rng.uniform(-100, 100, 10_000) for _ in range(4))
    u = invert_velocity_inputs(v_now, v_next, w_now, w_next, P)
    X = np.zeros((10_000, 5))
    X[:, 3], X[:, 4] = v_now, w_now
    nxt = discrete_step(X, u, P)
    err = max(
        float(np.max(np.abs(nxt[:, 3] - v_next) / np.maximum(1.0, np.abs(v_next)))),
        float(np.max(np.abs(nxt[:, 4] - w_next) / np.maximum(1.0, np.abs(w_next)))),
    )
    ok = mism == 0 and err <= 1e-12
    report(8, ok, f"selector mismatches {mism}/10000, max round-trip rel error {err:.2e}")
    assert ok


def test_criterion_9_determinism(tmp_path, report):
    import yaml

    path = tmp_path / "det.yaml"
    path.write_text(yaml.safe_dump({"seed": 3, "horizon_steps": 20, "egdclf": {"condition": 1}, "plant": {"kind": "discrete"}}))
    blobs = []
    for i in range(3):
        assert main(["run", "--config", str(path), "--out", str(tmp_path / f"r{i}")]) == 0
        blobs.append((tmp_path / f"r{i}" / "run.csv").read_bytes())
    ok = len(set(blobs)) == 1 and len(blobs[0]) > 0
    report(9, ok, f"3 runs, {len(blobs[0])} bytes each, identical={len(set(blobs)) == 1}")
    assert ok
