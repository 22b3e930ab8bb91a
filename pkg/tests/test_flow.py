import math

import numpy as np
import pytest

from vpmcf.curve import InitialShapeSpec, build_profile
from vpmcf.flow import (
    PLAIN_MCF,
    FlowState,
    PinchDetected,
    RedistributionActive,
    StepPolicy,
    advance,
    choose_dt,
    evolution_residual,
    normal_velocity,
    residual_step_policy,
    run,
    step,
)
from vpmcf.geometry import frames

PERTURBED = InitialShapeSpec("perturbed_hemisphere", {"radius": 1.0, "amplitude": 0.1, "mode_count": 2})
DUMBBELL = InitialShapeSpec("dumbbell", {"bulb_radius": 1.0, "neck_radius": 0.05, "length": 6.0})


def state_of(spec, N=None):
    return FlowState.initial(build_profile(spec if N is None else spec.with_N(N)))


@pytest.mark.parametrize("kind", ["sphere", "hemisphere"])
def test_normal_velocity_vanishes_on_round_shapes(kind):
    s = state_of(InitialShapeSpec(kind, {"radius": 1.0}))
    vel = normal_velocity(s, frames(s.curve))
    assert np.max(np.abs(vel)) < 1e-8


def test_choose_dt_formula():
    s = state_of(InitialShapeSpec("hemisphere", {"radius": 1.0}, N=200))
    fr = frames(s.curve)
    ds = 2 * math.sin(math.pi / 4 / 199)  # chord of the equal-angle mesh
    dt = choose_dt(s, fr, StepPolicy())
    assert dt == pytest.approx(0.4 * ds**2 / (2 + 2 * ds**2), rel=1e-9)
    assert dt == pytest.approx(0.2 * ds**2, rel=1e-4)
    assert choose_dt(s, fr, StepPolicy(dt_max=1e-9)) == 1e-9


def test_step_policy_validation():
    with pytest.raises(ValueError):
        StepPolicy(cfl_safety=0.0)
    with pytest.raises(ValueError):
        StepPolicy(mode="fast")
    with pytest.raises(ValueError):
        StepPolicy(redistribution_period=-1)


def test_sphere_is_a_fixed_point_for_100_steps():
    s0 = state_of(InitialShapeSpec("sphere", {"radius": 1.0}))
    s = s0
    for _ in range(100):
        s = step(s)
    assert s.step_index == 100 and s.t > 0
    assert np.max(np.abs(np.hypot(s.curve.x, s.curve.r) - 1.0)) < 1e-6


def test_batched_advance_equals_single_steps():
    s0 = state_of(PERTURBED, 120)
    a = advance(s0, StepPolicy(), 25)
    b = s0
    for _ in range(25):
        b = step(b)
    np.testing.assert_array_equal(a.curve.x, b.curve.x)
    np.testing.assert_array_equal(a.curve.r, b.curve.r)
    assert a.t == b.t


def test_volume_is_held_by_projection():
    s0 = state_of(PERTURBED, 120)
    s = advance(s0, StepPolicy(), 500)
    assert abs(s.volume - s0.volume) <= 1e-12 * s0.volume
    assert s.area < s0.area


def test_plain_mcf_shrinks_sphere_at_the_analytic_rate():
    # R(t)^2 = R0^2 - 2 n t for a round sphere under mean curvature flow
    s = state_of(InitialShapeSpec("sphere", {"radius": 1.0}, N=200))
    s = advance(s, StepPolicy(mode=PLAIN_MCF), 10**7, horizon=0.1)
    assert s.t == pytest.approx(0.1)
    radius = np.hypot(s.curve.x - s.curve.x.mean(), s.curve.r)
    np.testing.assert_allclose(radius, math.sqrt(1 - 0.4), rtol=1e-4)


def test_horizon_is_hit_exactly():
    s = advance(state_of(PERTURBED, 60), StepPolicy(), 10**7, horizon=0.01)
    assert s.t == pytest.approx(0.01, abs=1e-15)


def test_dumbbell_pinches_under_plain_mcf():
    s0 = state_of(DUMBBELL)
    with pytest.raises(PinchDetected) as info:
        advance(s0, StepPolicy(mode=PLAIN_MCF), 10**6, horizon=1.0)
    err = info.value
    assert 150 < err.node < 250
    assert err.r_min <= 1e-3 * s0.r_scale
    assert err.state.step_index == err.step_index > 0
    # the returned state is the last one before the guard tripped
    assert np.all(err.state.curve.r[1:-1] > 0)


def test_step_leaves_input_state_untouched_on_pinch():
    s0 = state_of(DUMBBELL)
    with pytest.raises(PinchDetected):
        step(s0, StepPolicy(pinch_epsilon=0.1))
    assert s0.step_index == 0


def test_run_on_exact_hemisphere_converges_immediately():
    summary = run(state_of(InitialShapeSpec("hemisphere", {"radius": 1.0})), StepPolicy(), horizon=1.0)
    assert summary.reason == "converged"
    assert summary.t == 0.0


def test_run_reports_pinch_for_dumbbell():
    summary = run(state_of(DUMBBELL), StepPolicy(mode=PLAIN_MCF), horizon=1.0, observe_every=10)
    assert summary.reason == "pinch-detected"
    assert isinstance(summary.error, PinchDetected)


def test_run_reaches_horizon_with_observers():
    seen = []
    summary = run(state_of(PERTURBED, 80), StepPolicy(), horizon=0.01, observers=[lambda s, f: seen.append(s.t)],
                  observe_every=50)
    assert summary.reason == "horizon"
    assert seen[0] == 0.0 and seen[-1] == pytest.approx(0.01)
    assert seen == sorted(seen)


def test_residual_refuses_redistributed_step():
    s0 = state_of(PERTURBED, 60)
    s = advance(s0, StepPolicy(redistribution_period=10), 9)
    s1 = step(s, StepPolicy(redistribution_period=10))
    assert s1.last_redistributed
    with pytest.raises(RedistributionActive):
        evolution_residual(s, s1, "v")


def test_residual_needs_adjacent_states():
    s0 = state_of(PERTURBED, 60)
    pol = residual_step_policy()
    s2 = step(step(s0, pol), pol)
    with pytest.raises(ValueError):
        evolution_residual(s0, s2, "v")
    with pytest.raises(ValueError):
        evolution_residual(s0, step(s0, pol), "ix")


def test_residual_of_height_equation_decreases_with_refinement():
    norms = []
    for N in (101, 201, 401):
        s0 = state_of(PERTURBED, N)
        s1 = step(s0, residual_step_policy())
        norms.append(evolution_residual(s0, s1, "ii").max_norm)
    assert norms[0] > 3 * norms[1] > 9 * norms[2]


def test_residual_vanishes_on_exact_sphere():
    s0 = state_of(InitialShapeSpec("sphere", {"radius": 1.0}))
    s1 = step(s0, residual_step_policy())
    for q in ("v", "vii", "viii"):
        assert evolution_residual(s0, s1, q).max_norm < 1e-5
