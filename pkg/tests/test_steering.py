import math

import numpy as np
import pytest

from fsmpc.egdclf import EgdclfSpec
from fsmpc.exceptions import PreconditionError
from fsmpc.model import UnicycleParams, rollout_discrete
from fsmpc.ocp import descent_residual
from fsmpc.steering import descent_certificate, phase_length, plan_feasible, turn_geometry
from fsmpc.verify import random_initial_state, sample_rngs

P = UnicycleParams()
C1, C2 = EgdclfSpec.cond1(), EgdclfSpec.cond2()


def test_turn_geometry_zero():
    assert turn_geometry(0.0, 1, 0.0) == (0.0, 0.0)


def test_turn_geometry_small_branch():
    th, d = turn_geometry(0.25, 1, 0.25)
    assert th == pytest.approx(math.atan(0.5), abs=1e-15)
    assert th == pytest.approx(0.46365, abs=1e-5)
    assert d == pytest.approx(0.5 * 0.5 * math.sqrt(1.25), rel=1e-15)
    assert d == pytest.approx(0.27951, abs=1e-5)
    xb, yb = d * math.cos(th), d * math.sin(th)
    assert xb == pytest.approx(0.25, rel=1e-14)
    assert yb == pytest.approx(0.125, rel=1e-14)
    assert xb**2 + yb**2 == pytest.approx(d**2, rel=1e-14)


def test_turn_geometry_large_branch():
    th, d = turn_geometry(4.0, 1, 4.0)
    assert th == pytest.approx(math.pi / 4)
    assert d == pytest.approx(2 * math.sqrt(2), rel=1e-15)
    assert d * math.cos(th) == pytest.approx(2.0) and d * math.sin(th) == pytest.approx(2.0)


def test_turn_geometry_cond2_uses_large_branch_for_large_states():
    th, d = turn_geometry(0.25, 2, 5.0)
    assert th == pytest.approx(math.pi / 4)
    th2, _ = turn_geometry(0.25, 1, 5.0)
    assert th2 == pytest.approx(math.atan(0.5))


@pytest.mark.parametrize("y1", [-3.0, -0.3, 0.0, 0.7, 1.0, 8.0])
@pytest.mark.parametrize("cond", [1, 2])
def test_turn_geometry_cancels_offset(y1, cond):
    th, d = turn_geometry(y1, cond, abs(y1))
    assert d * math.sin(th) == pytest.approx(y1 / 2, abs=1e-15)


def test_phase_length():
    assert phase_length(8) == 1 and phase_length(12) == 1 and phase_length(15) == 2


@pytest.mark.parametrize("spec", [C1, C2], ids=["cond1", "cond2"])
def test_plan_from_origin_is_zero(spec):
    plan = plan_feasible(np.zeros(5), spec, P)
    assert np.all(plan.states == 0) and np.all(plan.inputs == 0)
    cert = descent_certificate(plan, spec)
    assert cert.lhs == 0 and cert.rhs == 0 and cert.ok


def test_plan_on_axis():
    plan = plan_feasible([1, 0, 0, 0, 0], C2, P)
    t3 = plan.phase_times[2]
    assert plan.y1 == 0 and plan.theta_bar == 0 and plan.d == 0
    assert np.all(plan.states[t3:] == 0)


def test_plan_matches_independent_rollout():
    x0 = np.array([3.0, -2.0, 0.7, 1.2, -0.4])
    for spec in (C1, C2, EgdclfSpec.cond2(N=20)):
        plan = plan_feasible(x0, spec, P)
        ref = rollout_discrete(x0, plan.inputs, P).states
        np.testing.assert_allclose(plan.states, ref, atol=1e-12)
        assert np.all(plan.states[plan.phase_times[7]:] == 0)
        assert len(plan.states) == spec.N + 1


def test_certificate_small_state_bound():
    x0 = np.array([0, 0.25, 0, 0, 0])
    plan = plan_feasible(x0, C2, P)
    cert = descent_certificate(plan, C2)
    assert cert.ok and cert.bound_ok
    assert cert.bound == pytest.approx(5 * math.sqrt(2) * 0.5)
    assert cert.max_phase_value <= cert.bound


def test_plan_rejects_step_mismatch():
    with pytest.raises(PreconditionError):
        plan_feasible(np.ones(5), C2, UnicycleParams(h=0.5))


@pytest.mark.parametrize("spec", [C1, C2, EgdclfSpec.cond1(N=16, h=0.5), EgdclfSpec.cond2(N=30, h=2.0)])
def test_monte_carlo_certificates(spec):
    p = UnicycleParams(h=spec.h)
    for rng in sample_rngs(11, 300):
        x0 = random_initial_state(rng, 1e-6, 100.0)
        plan = plan_feasible(x0, spec, p)
        cert = descent_certificate(plan, spec)
        assert cert.ok and cert.bound_ok, x0
        assert plan.trajectory.is_consistent(p)
        assert descent_residual(plan.states, x0, spec) <= 1e-9 * max(1.0, (1 - spec.alpha) * spec.value(x0))
