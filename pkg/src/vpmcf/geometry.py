"""Pointwise and integral geometry of a surface of revolution.

Sign conventions: the normal points out of the enclosed region and the
meridian curvature ``k`` is positive on convex bulges, so a sphere of radius
``a`` has ``k = p = 1/a`` and ``H = n/a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .curve import ProfileCurve, Topology

SENTINEL_EPS = 1e-12


def ball_volume(n: int) -> float:
    """omega_n, the volume of the unit ball in R^n."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def sphere_area(n: int) -> float:
    """sigma_{n-1} = n * omega_n, the area of the unit sphere in R^n."""
    return n * ball_volume(n)


class PinchError(ValueError):
    """Geometry refused: a non-pole node sits on (or across) the axis."""

    def __init__(self, index: int, r: float):
        super().__init__(f"pinch at node {index} (r = {r:g})")
        self.index = index
        self.r = r


class PointFrame(NamedTuple):
    tangent: np.ndarray
    normal: np.ndarray
    u: float
    u_tilde: float
    v: float
    v_tilde: float
    q: float
    k: float
    p: float
    H: float
    A2: float
    C3: float


@dataclass(frozen=True, eq=False)
class Frames:
    """Per-node geometry stored as arrays (struct of arrays).

    ``frames[i]`` returns the :class:`PointFrame` of node ``i``. ``v`` and
    ``v_tilde`` carry ``inf`` where the corresponding normal component is
    below 1e-12 in magnitude; ``q`` is infinite at poles.
    """

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
    ds: np.ndarray
    pole: np.ndarray
    n: int

    def __len__(self):
        return self.u.size

    def __getitem__(self, i: int) -> PointFrame:
        return PointFrame(
            self.tangent[i], self.normal[i], self.u[i], self.u_tilde[i], self.v[i], self.v_tilde[i],
            self.q[i], self.k[i], self.p[i], self.H[i], self.A2[i], self.C3[i],
        )

    @property
    def inclination(self) -> np.ndarray:
        """<nu, i_1>, the axial component of the normal."""
        return self.normal[:, 0]

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights r^(n-1) ds (sigma_{n-1} omitted)."""
        return self.u ** (self.n - 1) * self.ds


def _arrays(curve: ProfileCurve):
    return np.ascontiguousarray(curve.x), np.ascontiguousarray(curve.r)


def _check_pinch(curve: ProfileCurve):
    poles = curve.pole_mask()
    bad = np.flatnonzero((curve.r <= 0) & ~poles)
    if bad.size:
        raise PinchError(int(bad[0]), float(curve.r[bad[0]]))


def frames(curve: ProfileCurve) -> Frames:
    _check_pinch(curve)
    x, r = _arrays(curve)
    N, n = curve.N, curve.n
    T = np.empty((N, 2))
    nu = np.empty((N, 2))
    k = np.empty(N)
    p = np.empty(N)
    ds = np.empty(N)
    _kernels.geometry(x, r, curve.topology.code, n, T, nu, k, p, ds)
    pole = curve.pole_mask()
    with np.errstate(divide="ignore", invalid="ignore"):
        nx, nr = nu[:, 0], nu[:, 1]
        v = np.where(nr > SENTINEL_EPS, 1.0 / nr, np.inf)
        v_tilde = np.where(np.abs(nx) > SENTINEL_EPS, 1.0 / nx, np.inf)
        q = np.where(pole, np.copysign(np.inf, nx), nx / r)
    H = k + (n - 1) * p
    A2 = k * k + (n - 1) * p * p
    C3 = k**3 + (n - 1) * p**3
    u = r.copy()
    u[pole] = 0.0
    return Frames(T, nu, u, x.copy(), v, v_tilde, q, k, p, H, A2, C3, ds, pole, n)


def surface_area(curve: ProfileCurve) -> float:
    """sigma_{n-1} * (trapezoid rule for the integral of r^(n-1) ds)."""
    r, c = curve.r, curve.chords
    n = curve.n
    return sphere_area(n) * float(np.sum(c * 0.5 * (r[:-1] ** (n - 1) + r[1:] ** (n - 1))))


def enclosed_volume(curve: ProfileCurve) -> float:
    """omega_n times the oriented line integral of r^n dx along the curve.

    Works for overhanging profiles; for a graph it is the usual
    omega_n * integral of rho^n dx_1.
    """
    x, r = _arrays(curve)
    return ball_volume(curve.n) * float(_kernels.volume_integral(x, r, curve.n))


def volume_gradient(curve: ProfileCurve, fr: Frames | None = None) -> np.ndarray:
    """Derivative of :func:`enclosed_volume` under unit normal motion of each node."""
    fr = frames(curve) if fr is None else fr
    x, r = _arrays(curve)
    g = np.empty(curve.N)
    _kernels.volume_normal_gradient(x, r, np.ascontiguousarray(fr.normal), curve.n, g)
    return ball_volume(curve.n) * g


def mean_h(curve: ProfileCurve, fr: Frames | None = None) -> float:
    """Area-weighted average of H; the sphere-area factor cancels."""
    fr = frames(curve) if fr is None else fr
    w = fr.weights
    return float(np.sum(fr.H * w) / np.sum(w))


def curve_length(curve: ProfileCurve) -> float:
    return curve.length


# --------------------------------------------------------------------------
# cap / cylinder decomposition


@dataclass(frozen=True)
class Cap:
    side: str  # "right" (pole d) or "left" (pole e)
    nodes: np.ndarray  # node indices, pole included
    L_alpha_x: float  # axial position of the cut plane
    cut_index: int  # cut lies between cut_index and cut_index + 1
    cut_weight: float  # interpolation weight towards cut_index + 1

    def interpolate(self, field: np.ndarray) -> float:
        """Linear interpolation of a per-node field at the cut point."""
        j, w = self.cut_index, self.cut_weight
        if j < 0:
            return float(field[0] if self.side == "left" else field[-1])
        return float((1.0 - w) * field[j] + w * field[j + 1])


@dataclass(frozen=True)
class Decomposition:
    alpha: float
    caps: tuple[Cap, ...]
    cylinder_nodes: np.ndarray
    degenerate: bool

    @property
    def cap_nodes(self) -> np.ndarray:
        if not self.caps:
            return np.empty(0, dtype=int)
        return np.unique(np.concatenate([c.nodes for c in self.caps]))

    @property
    def L_alpha_x(self) -> tuple[float, ...]:
        return tuple(c.L_alpha_x for c in self.caps)


def decompose(curve: ProfileCurve, fr: Frames, alpha: float) -> Decomposition:
    """Split into cap(s) {<nu, i_1> > 1/alpha} containing a pole and the rest.

    The scan starts at each pole and stops at the first node violating the
    cap inequality (signs mirrored for a left pole); the cut plane position is
    linearly interpolated between that node and its neighbour in the cap.
    """
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    c = fr.inclination
    x = curve.x
    N = curve.N
    thr = 1.0 / alpha
    caps = []
    in_cap = np.zeros(N, dtype=bool)
    degenerate = False

    def cut(j_out, j_in, values):
        # values[j_out] <= thr < values[j_in]
        a, b = values[j_out], values[j_in]
        w = (thr - a) / (b - a)
        return x[j_out] + w * (x[j_in] - x[j_out]), w

    if curve.topology.has_right_pole:
        j = N - 1
        while j >= 0 and c[j] > thr:
            j -= 1
        if j < 0:
            degenerate = True
            caps.append(Cap("right", np.arange(0, N), float(x[0]), -1, 0.0))
        else:
            Lx, w = cut(j, j + 1, c)
            caps.append(Cap("right", np.arange(j + 1, N), float(Lx), j, float(w)))
    if curve.topology.has_left_pole:
        j = 0
        while j < N and -c[j] > thr:
            j += 1
        if j >= N:
            degenerate = True
            caps.append(Cap("left", np.arange(0, N), float(x[-1]), -1, 0.0))
        else:
            Lx, w = cut(j, j - 1, -c)
            # store the cut between (j-1, j) with weight towards j
            caps.append(Cap("left", np.arange(0, j), float(Lx), j - 1, float(1.0 - w)))
    for cap in caps:
        if in_cap[cap.nodes].any():
            degenerate = True
        in_cap[cap.nodes] = True
    return Decomposition(float(alpha), tuple(caps), np.flatnonzero(~in_cap), degenerate)


# --------------------------------------------------------------------------
# arc-length calculus with boundary reflections


def _ghosts(curve: ProfileCurve, f: np.ndarray, plane_parity: int, pole_parity: int):
    """Values at the left and right ghost nodes for a per-node field.

    Parity +1 mirrors the field (even), -1 continues it oddly about the
    endpoint value (f_ghost = 2 f_end - f_neighbour).
    """
    topo = curve.topology

    def ghost(end, nb, parity):
        return f[nb] if parity > 0 else 2.0 * f[end] - f[nb]

    left = ghost(0, 1, pole_parity if topo.has_left_pole else plane_parity)
    right = ghost(-1, -2, pole_parity if topo.has_right_pole else plane_parity)
    return left, right


def _spacings(curve: ProfileCurve):
    c = curve.chords
    hm = np.concatenate([[c[0]], c])  # ghost spacing mirrors the first chord
    hp = np.concatenate([c, [c[-1]]])
    return hm, hp


def arc_derivatives(curve: ProfileCurve, f, plane_parity: int = 1, pole_parity: int = 1):
    """First and second arc-length derivatives by the three-point formulas
    on the (possibly non-uniform) chord mesh, ghost values at both ends."""
    f = np.asarray(f, dtype=float)
    left, right = _ghosts(curve, f, plane_parity, pole_parity)
    fm = np.concatenate([[left], f[:-1]])
    fp = np.concatenate([f[1:], [right]])
    hm, hp = _spacings(curve)
    denom = hm * hp * (hm + hp)
    d1 = (hm * hm * (fp - f) + hp * hp * (f - fm)) / denom
    d2 = 2.0 * (hm * (fp - f) - hp * (f - fm)) / denom
    return d1, d2


def laplace_beltrami(curve: ProfileCurve, field, fr: Frames | None = None,
                     plane_parity: int = 1, pole_parity: int = 1) -> np.ndarray:
    """Axisymmetric Laplace-Beltrami operator r^(1-n) (r^(n-1) f')'.

    Expanded as f'' - (n-1) q f' using r' = -<nu, i_1>; at a pole the smooth
    limit n f'' is used. Parities say how ``field`` continues across a
    mirror plane or across the axis (e.g. x is odd across the plane x = 0).
    """
    fr = frames(curve) if fr is None else fr
    d1, d2 = arc_derivatives(curve, field, plane_parity, pole_parity)
    n = curve.n
    out = np.empty_like(d2)
    reg = ~fr.pole
    out[reg] = d2[reg] - (n - 1) * fr.q[reg] * d1[reg]
    out[fr.pole] = n * d2[fr.pole]
    return out


def grad_A_squared(curve: ProfileCurve, fr: Frames, form: str = "stated") -> np.ndarray:
    """|grad A|^2 for a surface of revolution.

    ``stated``: k'^2 + (n-1) p'^2 + (n-1) q^2 (k-p)^2.
    ``codazzi``: k'^2 + 3 (n-1) p'^2, counting the mixed components
    nabla_j h_1j = nabla_j h_j1 = nabla_1 h_jj given by the Codazzi equations.
    """
    n = curve.n
    dk, _ = arc_derivatives(curve, fr.k)
    dp, _ = arc_derivatives(curve, fr.p)
    if form == "stated":
        with np.errstate(invalid="ignore"):
            return dk**2 + (n - 1) * dp**2 + (n - 1) * fr.q**2 * (fr.k - fr.p) ** 2
    if form == "codazzi":
        return dk**2 + 3 * (n - 1) * dp**2
    raise ValueError(f"unknown form {form!r}")


def max_abs(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(np.max(np.abs(values))) if values.size else 0.0


__all__ = [
    "Cap", "Decomposition", "Frames", "PinchError", "PointFrame", "arc_derivatives", "ball_volume",
    "curve_length", "decompose", "enclosed_volume", "frames", "laplace_beltrami", "mean_h",
    "sphere_area", "surface_area", "volume_gradient", "grad_A_squared", "max_abs", "Topology",
]
