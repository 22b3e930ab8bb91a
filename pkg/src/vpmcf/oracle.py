"""Independent reference values for testing the geometry and the flow.

Three sources: closed-form surfaces (sphere, hemisphere, cylinder segment),
Richardson extrapolation over nested node refinements, and a second
evaluation path for the integral of the meridian curvature that goes through
an integration by parts in the graph chart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.interpolate import CubicSpline

from .curve import InitialShapeSpec, ProfileCurve, Topology, build_profile
from .geometry import Frames, ball_volume, frames, sphere_area

KINDS = ("sphere", "hemisphere", "cylinder_segment")


class OracleError(ValueError):
    pass


class NotAGraph(OracleError):
    def __init__(self, index: int):
        super().__init__(f"profile is not a graph over the axis near node {index}")
        self.index = index


@dataclass(frozen=True)
class ReferenceRecord:
    """Closed-form values for a sampled reference surface.

    Scalars cover the whole hypersurface; arrays are per node.
    """

    kind: str
    params: dict
    n: int
    area: float
    volume: float
    k_integral: float
    tangent: np.ndarray
    normal: np.ndarray
    u: np.ndarray
    u_tilde: np.ndarray
    v: np.ndarray
    v_tilde: np.ndarray
    q: np.ndarray
    k: np.ndarray
    p: np.ndarray
    H: np.ndarray
    A2: np.ndarray
    C3: np.ndarray

    def fields(self) -> dict:
        return {name: getattr(self, name) for name in ("u", "u_tilde", "v", "v_tilde", "q", "k", "p", "H", "A2", "C3")}


def _inv(a):
    with np.errstate(divide="ignore"):
        return np.where(np.abs(a) > 1e-12, 1.0 / np.where(a == 0, 1.0, a), np.inf)


def _record(kind, params, n, area, volume, T, nu, x, r, k, p, pole):
    k = np.broadcast_to(np.asarray(k, dtype=float), x.shape).copy()
    p = np.broadcast_to(np.asarray(p, dtype=float), x.shape).copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(pole, np.copysign(np.inf, nu[:, 0]), nu[:, 0] / np.where(r == 0, 1.0, r))
    u = np.where(pole, 0.0, r)
    H = k + (n - 1) * p
    A2 = k * k + (n - 1) * p * p
    C3 = k**3 + (n - 1) * p**3
    k_int = sphere_area(n) * _smooth_integral(kind, params, n)
    return ReferenceRecord(kind, dict(params), n, area, volume, k_int, T, nu, u, x.copy(), _inv(nu[:, 1]),
                           _inv(nu[:, 0]), q, k, p, H, A2, C3)


def _smooth_integral(kind, params, n):
    """Integral of k r^(n-1) ds over the meridian, in closed form."""
    if kind == "cylinder_segment":
        return 0.0
    a = params["radius"]
    # integral of sin(phi)^(n-1) over [0, pi] is sigma_n / sigma_{n-1}
    full = a ** (n - 2) * a * sphere_area(n + 1) / sphere_area(n)
    return full if kind == "sphere" else 0.5 * full


def reference_surface(kind: str, params: dict, N: int = 400, n: int = 2) -> tuple[ProfileCurve, ReferenceRecord]:
    """Exactly sampled reference curve with analytic per-node values.

    ``sphere`` takes ``radius`` (and optional ``center_x``), ``hemisphere``
    takes ``radius``, ``cylinder_segment`` takes ``radius`` and ``length``
    and is stored with mirror planes at both ends.
    """
    if kind not in KINDS:
        raise OracleError(f"unknown reference kind {kind!r}; expected one of {KINDS}")
    params = {k: float(v) for k, v in params.items()}
    if params.get("radius", 0.0) <= 0 or not math.isfinite(params["radius"]):
        raise OracleError("radius must be positive and finite")
    if int(n) != n or n < 2:
        raise OracleError("n must be an integer >= 2")
    if int(N) != N or N < 3:
        raise OracleError("N must be an integer >= 3")
    a = params["radius"]
    sig_n1 = (n + 1) * ball_volume(n + 1)  # area of the unit n-sphere

    if kind == "sphere":
        c = params.get("center_x", 0.0)
        phi = np.linspace(0.0, math.pi, N)
        x, r = c - a * np.cos(phi), a * np.sin(phi)
        r[0] = r[-1] = 0.0
        T = np.column_stack([np.sin(phi), np.cos(phi)])
        nu = np.column_stack([-np.cos(phi), np.sin(phi)])
        nu[-1] = (1.0, 0.0)
        nu[0] = (-1.0, 0.0)
        curve = ProfileCurve(x, r, Topology.CLOSED, n)
        rec = _record(kind, params, n, sig_n1 * a**n, ball_volume(n + 1) * a ** (n + 1), T, nu, x, r,
                      1.0 / a, 1.0 / a, curve.pole_mask())
    elif kind == "hemisphere":
        th = np.linspace(0.0, 0.5 * math.pi, N)
        x, r = a * np.sin(th), a * np.cos(th)
        x[0], r[-1] = 0.0, 0.0
        T = np.column_stack([np.cos(th), -np.sin(th)])
        nu = np.column_stack([np.sin(th), np.cos(th)])
        nu[0] = (0.0, 1.0)
        nu[-1] = (1.0, 0.0)
        curve = ProfileCurve(x, r, Topology.FREE_BOUNDARY, n)
        rec = _record(kind, params, n, 0.5 * sig_n1 * a**n, 0.5 * ball_volume(n + 1) * a ** (n + 1), T, nu, x, r,
                      1.0 / a, 1.0 / a, curve.pole_mask())
    else:
        L = params.get("length", 0.0)
        if not L > 0:
            raise OracleError("cylinder_segment needs a positive length")
        x = np.linspace(0.0, L, N)
        r = np.full(N, a)
        T = np.tile([1.0, 0.0], (N, 1))
        nu = np.tile([0.0, 1.0], (N, 1))
        curve = ProfileCurve(x, r, Topology.OPEN, n)
        rec = _record(kind, params, n, sphere_area(n) * a ** (n - 1) * L, ball_volume(n) * a**n * L, T, nu, x, r,
                      0.0, 1.0 / a, curve.pole_mask())
    return curve, rec


# --------------------------------------------------------------------------
# Richardson refinement


@dataclass(frozen=True)
class RefineResult:
    value: float  # extrapolated
    order: float  # observed order (nan when exact)
    status: str  # converging | exact | non-converging
    values: tuple
    Ns: tuple

    @property
    def flagged(self) -> bool:
        return self.status != "converging"


Source = Union[InitialShapeSpec, ProfileCurve, Callable[[int], ProfileCurve]]


def spline_resample(curve: ProfileCurve, N: int) -> ProfileCurve:
    """Cubic-spline resampling in chord length, N nodes equally spaced in the spline parameter."""
    s = np.concatenate([[0.0], np.cumsum(curve.chords)])
    sx = CubicSpline(s, curve.x)
    sr = CubicSpline(s, curve.r)
    t = np.linspace(0.0, s[-1], N)
    x, r = sx(t), sr(t)
    x[0], x[-1] = curve.x[0], curve.x[-1]
    r[0], r[-1] = curve.r[0], curve.r[-1]
    return curve.with_nodes(x, r)


def _level_builder(source: Source, N0: int | None):
    if isinstance(source, InitialShapeSpec):
        N0 = source.N if N0 is None else N0
        return (lambda N: build_profile(source.with_N(N))), N0
    if isinstance(source, ProfileCurve):
        N0 = source.N if N0 is None else N0
        return (lambda N: spline_resample(source, N)), N0
    if callable(source):
        if N0 is None:
            raise OracleError("a base N is required when the source is a callable")
        return source, N0
    raise OracleError(f"cannot refine a {type(source).__name__}")


def refine(quantity: Callable[[ProfileCurve], float], source: Source, levels: int = 3, N: int | None = None,
           exact_tol: float = 1e-13) -> RefineResult:
    """Evaluate ``quantity`` on nested refinements and Richardson-extrapolate.

    Level k uses (N - 1) 2^k + 1 nodes, so the mesh spacing halves exactly.
    The observed order comes from the last three levels; the extrapolation
    assumes order 2. Differences below ``exact_tol`` (relative) mark the
    quantity as exact; an observed order below 1 marks it non-converging.
    """
    if levels < 3:
        raise OracleError("refine needs at least 3 levels")
    build, N0 = _level_builder(source, N)
    Ns = tuple((N0 - 1) * 2**k + 1 for k in range(levels))
    vals = tuple(float(quantity(build(Nk))) for Nk in Ns)
    q0, q1, q2 = vals[-3:]
    scale = max(1.0, abs(q2))
    d1, d2 = q1 - q0, q2 - q1
    if abs(d1) <= exact_tol * scale and abs(d2) <= exact_tol * scale:
        return RefineResult(q2, math.nan, "exact", vals, Ns)
    order = math.log2(abs(d1) / abs(d2)) if d2 != 0 else math.inf
    value = q2 + d2 / 3.0
    status = "converging" if order >= 1.0 else "non-converging"
    return RefineResult(value, order, status, vals, Ns)


def observed_order(errors) -> list:
    """log2 of successive error ratios for a sequence of halving meshes."""
    e = np.abs(np.asarray(errors, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        return list(np.log2(e[:-1] / e[1:]))


# --------------------------------------------------------------------------
# integral of k by integration by parts


def k_integral_direct(curve: ProfileCurve, fr: Frames | None = None) -> float:
    """sigma_{n-1} times the node quadrature of k r^(n-1) ds."""
    fr = frames(curve) if fr is None else fr
    return sphere_area(curve.n) * float(np.sum(fr.k * fr.weights))


def k_integral_by_parts(curve: ProfileCurve, fr: Frames | None = None) -> float:
    """The same integral as (n-1) times the integral of arctan(rho') rho' rho^(n-2) dx.

    Written per unit arc length this is ``atan2(T_r, T_x) T_r r^(n-2) ds``.
    The boundary terms vanish because the slope is zero at the plane and the
    radius is zero at the pole. The profile must be a free-boundary graph
    over the axis, with x strictly increasing.
    """
    if curve.topology is not Topology.FREE_BOUNDARY:
        raise OracleError("the identity needs a free-boundary profile")
    dx = np.diff(curve.x)
    bad = np.flatnonzero(dx <= 0)
    if bad.size:
        raise NotAGraph(int(bad[0]))
    fr = frames(curve) if fr is None else fr
    n = curve.n
    Tx, Tr = fr.tangent[:, 0], fr.tangent[:, 1]
    integrand = np.arctan2(Tr, Tx) * Tr
    if n > 2:
        integrand = integrand * fr.u ** (n - 2)
    return sphere_area(n) * (n - 1) * float(np.sum(integrand * fr.ds))


__all__ = [
    "KINDS", "NotAGraph", "OracleError", "RefineResult", "ReferenceRecord", "k_integral_by_parts",
    "k_integral_direct", "observed_order", "reference_surface", "refine", "spline_resample",
]
