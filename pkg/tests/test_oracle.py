import math

import numpy as np
import pytest

from vpmcf.curve import InitialShapeSpec, ProfileCurve, Topology, build_profile
from vpmcf.geometry import enclosed_volume, frames, laplace_beltrami, surface_area
from vpmcf.oracle import (
    NotAGraph,
    OracleError,
    k_integral_by_parts,
    k_integral_direct,
    observed_order,
    reference_surface,
    refine,
)


def test_sphere_record():
    curve, rec = reference_surface("sphere", {"radius": 1.0}, 400)
    assert rec.area == pytest.approx(4 * math.pi)
    assert rec.volume == pytest.approx(4 * math.pi / 3)
    np.testing.assert_allclose(rec.H, 2.0)
    assert rec.k_integral == pytest.approx(4 * math.pi)


def test_cylinder_record():
    curve, rec = reference_surface("cylinder_segment", {"radius": 1.0, "length": 2.0}, 50)
    assert rec.area == pytest.approx(4 * math.pi)
    np.testing.assert_allclose(rec.H, 1.0)
    assert curve.topology is Topology.OPEN


def test_hemisphere_record():
    _, rec = reference_surface("hemisphere", {"radius": 2.0}, 100)
    assert rec.volume == pytest.approx(16 * math.pi / 3)
    np.testing.assert_allclose(rec.H, 1.0)


@pytest.mark.parametrize("kind,params", [
    ("sphere", {"radius": 1.3}), ("hemisphere", {"radius": 0.7}), ("cylinder_segment", {"radius": 2.0, "length": 1.0}),
])
def test_record_identities(kind, params):
    curve, rec = reference_surface(kind, params, 101, n=3)
    reg = rec.u > 0
    np.testing.assert_allclose(rec.p[reg] ** 2 + rec.q[reg] ** 2, rec.u[reg] ** -2.0, rtol=1e-12)
    np.testing.assert_allclose(rec.H, rec.k + 2 * rec.p)


@pytest.mark.parametrize("kind", ["sphere", "hemisphere"])
def test_records_match_discrete_frames(kind):
    curve, rec = reference_surface(kind, {"radius": 1.0}, 200)
    fr = frames(curve)
    np.testing.assert_allclose(fr.tangent, rec.tangent, atol=1e-12)
    np.testing.assert_allclose(fr.normal, rec.normal, atol=1e-12)
    for name in ("u", "u_tilde", "k", "p", "H", "A2", "C3"):
        np.testing.assert_allclose(getattr(fr, name), getattr(rec, name), atol=1e-9, err_msg=name)


def test_reference_errors():
    with pytest.raises(OracleError):
        reference_surface("torus", {"radius": 1.0})
    with pytest.raises(OracleError):
        reference_surface("sphere", {"radius": -1.0})
    with pytest.raises(OracleError):
        reference_surface("cylinder_segment", {"radius": 1.0})


def test_refine_sphere_area():
    res = refine(surface_area, InitialShapeSpec("sphere", {"radius": 1.0}, N=401), 3)
    assert res.value == pytest.approx(4 * math.pi, abs=1e-8)
    assert res.order == pytest.approx(2.0, abs=0.05)
    assert res.status == "converging" and res.Ns == (401, 801, 1601)


def test_refine_dumbbell_volume_is_stable_to_six_digits():
    res = refine(enclosed_volume, InitialShapeSpec("dumbbell", {"bulb_radius": 1.0, "neck_radius": 0.05, "length": 6.0}, N=401), 4)
    assert abs(res.values[-1] - res.value) < 1e-6 * res.value
    assert res.order == pytest.approx(2.0, abs=0.1)


def test_refine_constant_laplacian_is_exact():
    def lap_of_constant(c):
        return float(np.max(np.abs(laplace_beltrami(c, np.ones(c.N)))))

    res = refine(lap_of_constant, InitialShapeSpec("sphere", {"radius": 1.0}, N=51), 3)
    assert res.status == "exact" and res.flagged


def test_refine_flags_non_converging_quantity():
    res = refine(lambda c: 1.0 / c.N ** 0.5, lambda N: ProfileCurve(np.linspace(0, 1, N), np.ones(N), Topology.OPEN, 2), 3, N=11)
    assert res.status == "non-converging"


def test_refine_of_bare_curve_uses_spline_resampling():
    curve, _ = reference_surface("sphere", {"radius": 1.0}, 101)
    res = refine(surface_area, curve, 3)
    assert res.value == pytest.approx(4 * math.pi, rel=1e-7)


def test_refine_needs_three_levels():
    with pytest.raises(OracleError):
        refine(surface_area, InitialShapeSpec("sphere", {"radius": 1.0}), 2)


def test_observed_order():
    assert observed_order([4.0, 1.0, 0.25]) == pytest.approx([2.0, 2.0])


def test_k_integral_on_hemisphere():
    curve, rec = reference_surface("hemisphere", {"radius": 1.0}, 400)
    assert rec.k_integral == pytest.approx(2 * math.pi)
    assert k_integral_by_parts(curve) == pytest.approx(2 * math.pi, rel=1e-4)
    assert k_integral_direct(curve) == pytest.approx(2 * math.pi, rel=1e-4)


def test_k_integral_on_cylinder_with_cap():
    spec = InitialShapeSpec("cosine_bump_cylinder",
                            {"base_radius": 1.0, "length": 2.0, "amplitude": 0.2, "mode_count": 2}, N=201)
    c = build_profile(spec.with_N(400))
    # raw values differ by the O(h^2) discretisation error; the extrapolated limits agree closely
    assert k_integral_by_parts(c) == pytest.approx(k_integral_direct(c), abs=1e-3)
    assert refine(k_integral_by_parts, spec, 3).value == pytest.approx(refine(k_integral_direct, spec, 3).value, abs=1e-6)


def test_k_integral_rejects_overhang_and_closed():
    x = np.array([0.0, 1.0, 0.8, 1.5])
    r = np.array([1.0, 1.0, 0.5, 0.0])
    with pytest.raises(NotAGraph):
        k_integral_by_parts(ProfileCurve(x, r, Topology.FREE_BOUNDARY, 2))
    curve, _ = reference_surface("sphere", {"radius": 1.0}, 50)
    with pytest.raises(OracleError):
        k_integral_by_parts(curve)
