import math

import pytest

from vpmcf.convergence import cmc_deviation, empirical_rate, fit_limit_shape, is_converged, volume_centroid
from vpmcf.curve import InitialShapeSpec, build_profile
from vpmcf.flow import FlowState
from vpmcf.geometry import frames, mean_h


def state_of(spec):
    return FlowState.initial(build_profile(spec))


def test_exact_sphere_has_no_cmc_deviation():
    s = state_of(InitialShapeSpec("sphere", {"radius": 1.0}))
    sup, l2 = cmc_deviation(s, frames(s.curve))
    assert sup < 1e-6 and l2 < 1e-6


def test_cylinder_with_cap_deviation():
    spec = InitialShapeSpec("cosine_bump_cylinder", {"base_radius": 1.0, "length": 2.0, "amplitude": 0.0, "mode_count": 1})
    s = state_of(spec)
    h = mean_h(s.curve)
    sup, _ = cmc_deviation(s)
    assert sup == pytest.approx(max(abs(1 - h), abs(2 - h)), abs=1e-6)


def test_perturbed_hemisphere_starts_far_from_cmc():
    s = state_of(InitialShapeSpec("perturbed_hemisphere", {"radius": 1.0, "amplitude": 0.1, "mode_count": 2}))
    assert cmc_deviation(s)[0] > 0.01
    assert not is_converged(s, tol_cmc=1e-4).converged


def test_limit_radius_of_hemisphere_and_sphere():
    radius, center, dev = fit_limit_shape(state_of(InitialShapeSpec("hemisphere", {"radius": 1.0})))
    assert radius == pytest.approx(1.0, rel=1e-5)
    assert center == 0.0
    assert dev < 1e-5
    radius, center, dev = fit_limit_shape(state_of(InitialShapeSpec("sphere", {"radius": 1.0, "center_x": 0.7})))
    assert radius == pytest.approx(1.0, rel=1e-4)
    assert center == pytest.approx(0.7, abs=1e-12)


def test_fit_uses_exact_volume_ratio():
    # discrete volume gives a discrete radius; shape_dev is the node distance from it
    s = state_of(InitialShapeSpec("hemisphere", {"radius": 1.0}, N=4001))
    radius, _, dev = fit_limit_shape(s)
    assert abs(radius - 1.0) < 1e-7 and dev < 1e-7


def test_exact_hemisphere_is_converged():
    rep = is_converged(state_of(InitialShapeSpec("hemisphere", {"radius": 1.0})), tol_cmc=1e-4)
    assert rep.converged


def test_dumbbell_is_not_converged():
    s = state_of(InitialShapeSpec("dumbbell", {"bulb_radius": 1.0, "neck_radius": 0.3, "length": 6.0}))
    assert not is_converged(s).converged


def test_default_tolerance_and_validation():
    s = state_of(InitialShapeSpec("hemisphere", {"radius": 2.0}))
    rep = is_converged(s)
    assert rep.tol_cmc == pytest.approx(1e-4 * 2 / 2.0, rel=1e-4)
    with pytest.raises(ValueError):
        is_converged(s, tol_shape=0.0)


def test_centroid_of_symmetric_shape():
    c = build_profile(InitialShapeSpec("perturbed_sphere", {"radius": 1.0, "amplitude": 0.1, "mode_count": 2, "center_x": -1.5}))
    assert volume_centroid(c) == pytest.approx(-1.5, abs=1e-12)


def test_empirical_rate():
    ts = [0.0, 0.5, 1.0, 1.5]
    assert empirical_rate(ts, [math.exp(-4 * t) for t in ts]) == pytest.approx(4.0)
    assert math.isnan(empirical_rate([0.0], [1.0]))
