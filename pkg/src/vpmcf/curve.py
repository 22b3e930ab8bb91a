"""Generating curves of axially symmetric hypersurfaces.

A curve is an ordered list of nodes ``(x, r)`` in the meridian half-plane,
ordered by arc length (not by ``x``), together with a topology tag and the
dimension ``n`` of the hypersurface obtained by rotating it about the x-axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from numpy.polynomial import legendre

from . import _kernels

MIN_NODES = 16
SPACING_RTOL = 0.01
_FINE = 200_001


class Topology(str, Enum):
    FREE_BOUNDARY = "free_boundary"
    CLOSED = "closed"
    # Reference-only: a segment with mirror planes at both ends (cylinders).
    OPEN = "open"

    @property
    def code(self) -> int:
        return {"free_boundary": _kernels.FREE, "closed": _kernels.CLOSED, "open": _kernels.OPEN}[self.value]

    @property
    def has_left_pole(self) -> bool:
        return self is Topology.CLOSED

    @property
    def has_right_pole(self) -> bool:
        return self is not Topology.OPEN

    @classmethod
    def parse(cls, value: "Topology | str") -> "Topology":
        if isinstance(value, Topology):
            return value
        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"freeboundary": "free_boundary", "free": "free_boundary"}
        return cls(aliases.get(key, key))


class CurveError(ValueError):
    pass


class InvalidSpecError(CurveError):
    """Raised by :func:`build_profile`; ``field`` names the offending parameter."""

    def __init__(self, field: str, message: str):
        super().__init__(f"invalid spec field {field!r}: {message}")
        self.field = field


class DegenerateCurveError(CurveError):
    pass


@dataclass(frozen=True, eq=False)
class ProfileCurve:
    x: np.ndarray
    r: np.ndarray
    topology: Topology
    n: int = 2

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        r = np.array(self.r, dtype=float)
        if x.ndim != 1 or x.shape != r.shape:
            raise CurveError("x and r must be 1-D arrays of equal length")
        if x.size < 3:
            raise CurveError("a curve needs at least 3 nodes")
        if int(self.n) != self.n or self.n < 2:
            raise CurveError(f"dimension n must be an integer >= 2, got {self.n}")
        x.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "topology", Topology.parse(self.topology))
        object.__setattr__(self, "n", int(self.n))

    @property
    def N(self) -> int:
        return self.x.size

    @property
    def nodes(self) -> np.ndarray:
        return np.column_stack([self.x, self.r])

    @property
    def chords(self) -> np.ndarray:
        return np.hypot(np.diff(self.x), np.diff(self.r))

    @property
    def length(self) -> float:
        return float(self.chords.sum())

    def pole_mask(self) -> np.ndarray:
        mask = np.zeros(self.N, dtype=bool)
        mask[0] = self.topology.has_left_pole
        mask[-1] = self.topology.has_right_pole
        return mask

    def with_nodes(self, x, r) -> "ProfileCurve":
        return ProfileCurve(x, r, self.topology, self.n)

    def translated(self, dx: float) -> "ProfileCurve":
        if self.topology is Topology.FREE_BOUNDARY:
            raise CurveError("a free-boundary curve is pinned to the plane x = 0")
        return self.with_nodes(self.x + dx, self.r)

    def scaled(self, factor: float) -> "ProfileCurve":
        return self.with_nodes(self.x * factor, self.r * factor)

    def __repr__(self):
        return f"ProfileCurve(N={self.N}, topology={self.topology.value}, n={self.n}, length={self.length:.6g})"


# --------------------------------------------------------------------------
# scenario library


@dataclass(frozen=True)
class InitialShapeSpec:
    """Parametrised initial shape.

    ``kind`` is one of ``hemisphere``, ``sphere``, ``perturbed_hemisphere``,
    ``perturbed_sphere``, ``cosine_bump_cylinder`` or ``dumbbell``; ``params``
    holds the kind's parameters (see :data:`SHAPE_PARAMS`).
    """

    kind: str
    params: dict = field(default_factory=dict)
    topology: Topology | None = None
    n: int = 2
    N: int = 400

    def with_N(self, N: int) -> "InitialShapeSpec":
        return InitialShapeSpec(self.kind, dict(self.params), self.topology, self.n, N)


# required parameters, optional parameters with defaults, allowed topologies
SHAPE_PARAMS = {
    "hemisphere": (("radius",), {}, (Topology.FREE_BOUNDARY,)),
    "sphere": (("radius",), {"center_x": 0.0}, (Topology.CLOSED,)),
    "perturbed_hemisphere": (("radius", "amplitude", "mode_count"), {}, (Topology.FREE_BOUNDARY,)),
    "perturbed_sphere": (("radius", "amplitude", "mode_count"), {"center_x": 0.0}, (Topology.CLOSED,)),
    "cosine_bump_cylinder": (
        ("base_radius", "length", "amplitude", "mode_count"),
        {},
        (Topology.FREE_BOUNDARY, Topology.CLOSED),
    ),
    "dumbbell": (("bulb_radius", "neck_radius", "length"), {"neck_width": 0.2}, (Topology.CLOSED,)),
}


def _check_spec(spec: InitialShapeSpec) -> tuple[dict, Topology]:
    if spec.kind not in SHAPE_PARAMS:
        raise InvalidSpecError("kind", f"unknown shape {spec.kind!r}; expected one of {sorted(SHAPE_PARAMS)}")
    required, optional, topologies = SHAPE_PARAMS[spec.kind]
    params = dict(optional)
    unknown = set(spec.params) - set(required) - set(optional)
    if unknown:
        raise InvalidSpecError(sorted(unknown)[0], f"not a parameter of {spec.kind}")
    for name in required:
        if name not in spec.params:
            raise InvalidSpecError(name, "missing")
    params.update(spec.params)
    for name, value in params.items():
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise InvalidSpecError(name, f"not a number: {value!r}") from None
        if not math.isfinite(value):
            raise InvalidSpecError(name, "must be finite")
        params[name] = value
    for name in ("radius", "base_radius", "length", "bulb_radius", "neck_radius", "neck_width"):
        if name in params and params[name] <= 0:
            raise InvalidSpecError(name, f"must be positive, got {params[name]}")
    if "amplitude" in params:
        base = params.get("radius", params.get("base_radius"))
        if params["amplitude"] < 0:
            raise InvalidSpecError("amplitude", "must be non-negative")
        if params["amplitude"] >= base:
            raise InvalidSpecError("amplitude", f"amplitude {params['amplitude']} >= radius {base}")
    if "mode_count" in params:
        m = params["mode_count"]
        if m != int(m) or m < 1:
            raise InvalidSpecError("mode_count", f"must be a positive integer, got {m}")
        params["mode_count"] = int(m)
    if spec.kind == "dumbbell" and params["neck_radius"] >= params["bulb_radius"]:
        raise InvalidSpecError("neck_radius", "must be smaller than bulb_radius")
    topology = Topology.parse(spec.topology) if spec.topology is not None else topologies[0]
    if topology not in topologies:
        raise InvalidSpecError("topology", f"{spec.kind} supports {[t.value for t in topologies]}")
    if int(spec.n) != spec.n or spec.n < 2:
        raise InvalidSpecError("n", f"must be an integer >= 2, got {spec.n}")
    if int(spec.N) != spec.N or spec.N < 3:
        raise InvalidSpecError("N", f"must be an integer >= 3, got {spec.N}")
    return params, topology


def _sample_by_arclength(fun: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]], N: int):
    """Evaluate the parametrised curve ``fun`` on [0, 1] at N points equally
    spaced in arc length (nodes lie exactly on the curve)."""
    tau = np.linspace(0.0, 1.0, _FINE)
    x, r = fun(tau)
    s = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(x), np.diff(r)))])
    targets = np.linspace(0.0, s[-1], N)
    tau_nodes = np.interp(targets, s, tau)
    tau_nodes[0], tau_nodes[-1] = 0.0, 1.0
    return fun(tau_nodes)


def _cosine_bump(params, topology):
    base, length = params["base_radius"], params["length"]
    amp, m = params["amplitude"], params["mode_count"]

    def radius(xx):
        return base + amp * np.cos(m * np.pi * xx / length)

    r_end = radius(length)
    r_start = radius(0.0)
    pieces = []  # (arc length, function of local parameter in [0,1])
    if topology is Topology.CLOSED:
        pieces.append((0.5 * np.pi * r_start, lambda u: (-r_start * np.cos(0.5 * np.pi * u), r_start * np.sin(0.5 * np.pi * u))))
    # the cylinder piece length is only a weight for splitting tau
    fine = np.linspace(0.0, length, 20001)
    cyl_len = float(np.hypot(np.diff(fine), np.diff(radius(fine))).sum())
    pieces.append((cyl_len, lambda u: (length * u, radius(length * u))))
    pieces.append((0.5 * np.pi * r_end, lambda u: (length + r_end * np.sin(0.5 * np.pi * u), r_end * np.cos(0.5 * np.pi * u))))
    weights = np.array([p[0] for p in pieces])
    edges = np.concatenate([[0.0], np.cumsum(weights) / weights.sum()])

    def fun(tau):
        tau = np.asarray(tau, dtype=float)
        x = np.empty_like(tau)
        r = np.empty_like(tau)
        for j, (_, piece) in enumerate(pieces):
            lo, hi = edges[j], edges[j + 1]
            sel = (tau >= lo) & ((tau < hi) if j < len(pieces) - 1 else (tau <= hi))
            xx, rr = piece((tau[sel] - lo) / (hi - lo))
            x[sel], r[sel] = xx, rr
        return x, r

    return fun


def dumbbell_radius(xi, bulb_radius, neck_radius, neck_width=0.2):
    """Dumbbell profile as a function of the normalised axial coordinate
    ``xi`` in [-1, 1]: an ellipsoidal envelope ``b*sqrt(1 - xi^2)`` with a
    Gaussian notch that brings the radius down to ``neck_radius`` at xi = 0."""
    xi = np.asarray(xi, dtype=float)
    notch = 1.0 - (1.0 - neck_radius / bulb_radius) * np.exp(-0.5 * (xi / neck_width) ** 2)
    return bulb_radius * np.sqrt(np.clip(1.0 - xi * xi, 0.0, None)) * notch


def build_profile(spec: InitialShapeSpec) -> ProfileCurve:
    """Sample the initial generating curve described by ``spec``.

    Circular kinds are sampled at exactly equal angles. All other kinds are
    evaluated on their analytic parametrisation at nodes equally spaced in
    arc length, so every node lies on the smooth curve.

    ``perturbed_hemisphere`` uses the polar radius
    ``radius + amplitude * P_{2m}(cos psi)`` (psi measured from the axis,
    ``P`` a Legendre polynomial). These are the axisymmetric Neumann modes
    of the hemisphere. ``perturbed_sphere`` uses
    ``radius + amplitude * cos(2 m phi)`` with phi measured from the left pole.
    """
    params, topology = _check_spec(spec)
    N, kind = int(spec.N), spec.kind

    if kind == "hemisphere":
        theta = np.linspace(0.0, 0.5 * np.pi, N)
        x, r = params["radius"] * np.sin(theta), params["radius"] * np.cos(theta)
    elif kind == "sphere":
        phi = np.linspace(0.0, np.pi, N)
        x = params["center_x"] - params["radius"] * np.cos(phi)
        r = params["radius"] * np.sin(phi)
    elif kind == "perturbed_hemisphere":
        mode = legendre.Legendre.basis(2 * params["mode_count"])
        R, a = params["radius"], params["amplitude"]

        def fun(tau):
            psi = (1.0 - tau) * 0.5 * np.pi
            rho = R + a * mode(np.cos(psi))
            return rho * np.cos(psi), rho * np.sin(psi)

        x, r = _sample_by_arclength(fun, N)
    elif kind == "perturbed_sphere":
        R, a, m, c = params["radius"], params["amplitude"], params["mode_count"], params["center_x"]

        def fun(tau):
            phi = tau * np.pi
            rho = R + a * np.cos(2 * m * phi)
            return c - rho * np.cos(phi), rho * np.sin(phi)

        x, r = _sample_by_arclength(fun, N)
    elif kind == "cosine_bump_cylinder":
        x, r = _sample_by_arclength(_cosine_bump(params, topology), N)
    else:  # dumbbell
        b, a, L, w = params["bulb_radius"], params["neck_radius"], params["length"], params["neck_width"]

        def fun(tau):
            xi = -np.cos(np.pi * tau)
            return 0.5 * L * (1.0 + xi), _dumbbell_r(tau, b, a, w)

        x, r = _sample_by_arclength(fun, N)

    x = np.array(x, dtype=float)
    r = np.array(r, dtype=float)
    if topology is Topology.FREE_BOUNDARY:
        x[0] = 0.0
    if topology.has_left_pole:
        r[0] = 0.0
    if topology.has_right_pole:
        r[-1] = 0.0
    return ProfileCurve(x, r, topology, spec.n)


def _dumbbell_r(tau, b, a, w):
    # sin(pi tau) = sqrt(1 - xi^2) without the cancellation near the poles
    xi = -np.cos(np.pi * tau)
    notch = 1.0 - (1.0 - a / b) * np.exp(-0.5 * (xi / w) ** 2)
    return b * np.sin(np.pi * tau) * notch


# --------------------------------------------------------------------------
# resampling and validation


def resample(curve: ProfileCurve, N: int) -> ProfileCurve:
    """Redistribute to ``N`` nodes equally spaced along the input polyline.

    Endpoints are kept bit-for-bit. Interpolation is piecewise linear, so the
    polyline length changes by O(ds^2) on curved arcs.
    """
    if N < 2:
        raise CurveError(f"resample needs N >= 2, got {N}")
    total = curve.length
    scale = max(np.ptp(curve.x), np.ptp(curve.r), np.abs(curve.x).max(), np.abs(curve.r).max())
    if not total > 1e-12 * scale or total == 0.0:
        raise DegenerateCurveError(f"total length {total:g} is degenerate relative to extent {scale:g}")
    x, r = _kernels.resample(np.ascontiguousarray(curve.x), np.ascontiguousarray(curve.r), int(N))
    return curve.with_nodes(x, r)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    location: int | None = None
    message: str = ""
    required: bool = True


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[Check, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if c.required)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed and c.required]

    def __bool__(self):
        return self.ok

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else ("FAIL" if c.required else "warn")
            where = f" at node {c.location}" if c.location is not None else ""
            lines.append(f"{status:4s} {c.name}{where} {c.message}".rstrip())
        return "\n".join(lines)


def _first(mask) -> int | None:
    idx = np.flatnonzero(mask)
    return int(idx[0]) if idx.size else None


def _self_intersection(x, r) -> int | None:
    """Index of the first segment properly crossing a non-adjacent one."""
    p0 = np.column_stack([x[:-1], r[:-1]])
    p1 = np.column_stack([x[1:], r[1:]])
    m = len(p0)
    if m < 3:
        return None

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    for i in range(m - 2):
        j = np.arange(i + 2, m)
        a, b = p0[i], p1[i]
        c, e = p0[j], p1[j]
        o1 = orient(a, b, c)
        o2 = orient(a, b, e)
        o3 = orient(c, e, a[None, :].repeat(len(j), 0))
        o4 = orient(c, e, b[None, :].repeat(len(j), 0))
        hit = (o1 * o2 < 0) & (o3 * o4 < 0)
        if hit.any():
            return i
    return None


def validate(curve: ProfileCurve) -> ValidationReport:
    """Check every curve and topology invariant; never raises for bad data."""
    x, r, N = curve.x, curve.r, curve.N
    scale = max(1.0, float(np.abs(curve.nodes).max())) if np.isfinite(curve.nodes).all() else 1.0
    tol = 1e-12 * scale
    checks = [Check("node_count", N >= MIN_NODES, None if N >= MIN_NODES else N, f"N={N}, need >= {MIN_NODES}")]

    finite = np.isfinite(x) & np.isfinite(r)
    checks.append(Check("finite", bool(finite.all()), _first(~finite)))
    if not finite.all():
        return ValidationReport(tuple(checks))

    chords = curve.chords
    checks.append(Check("distinct_consecutive", bool((chords > 0).all()), _first(chords <= 0)))

    interior = r[1:-1]
    bad = _first(interior <= 0)
    checks.append(
        Check("interior_radius_positive", bad is None, None if bad is None else bad + 1,
              "" if bad is None else f"pinch: r={interior[bad]:g}")
    )

    topo = curve.topology
    if topo is Topology.FREE_BOUNDARY:
        checks.append(Check("plane_contact", abs(x[0]) <= tol, None if abs(x[0]) <= tol else 0, f"x0={x[0]:g}"))
        checks.append(Check("plane_radius_positive", r[0] > 0, None if r[0] > 0 else 0))
        checks.append(Check("right_pole_on_axis", abs(r[-1]) <= tol, None if abs(r[-1]) <= tol else N - 1, f"r={r[-1]:g}"))
        checks.append(Check("pole_beyond_plane", x[-1] > 0, None if x[-1] > 0 else N - 1))
        inside = x >= -tol
        checks.append(Check("right_half_space", bool(inside.all()), _first(~inside)))
    elif topo is Topology.CLOSED:
        checks.append(Check("left_pole_on_axis", abs(r[0]) <= tol, None if abs(r[0]) <= tol else 0, f"r={r[0]:g}"))
        checks.append(Check("right_pole_on_axis", abs(r[-1]) <= tol, None if abs(r[-1]) <= tol else N - 1, f"r={r[-1]:g}"))
        checks.append(Check("pole_order", x[0] < x[-1], None if x[0] < x[-1] else 0, f"e={x[0]:g}, d={x[-1]:g}"))

    hit = _self_intersection(x, r) if (chords > 0).all() else None
    checks.append(Check("simple", hit is None, hit))

    if chords.size and chords.mean() > 0:
        dev = np.abs(chords / chords.mean() - 1.0)
        checks.append(
            Check("uniform_spacing", bool(dev.max() <= SPACING_RTOL), None if dev.max() <= SPACING_RTOL else int(dev.argmax()),
                  f"max deviation {dev.max():.3g}", required=False)
        )
    return ValidationReport(tuple(checks))
