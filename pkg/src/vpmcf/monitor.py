"""Runtime checks of the a-priori bounds of the flow.

A :class:`BoundLedger` is built once from the initial surface. A
:class:`Monitor` then evaluates every bound at each observation and returns a
:class:`MonitorReport`. Failures are recorded in the report and never raised.

Normalisation choices, which are interpretations rather than given values:

* The isoperimetric floor for the area uses the sharp constant. A region of
  volume V has boundary area at least that of the ball of volume V (Closed),
  or of the half-ball of volume V standing on the plane (free boundary).
* The bound on ``h`` carries the factor sigma_{n-1} that comes from
  integrating over the rotation directions. Without it the two sides of the
  inequality would be measured in different units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .curve import Topology
from .geometry import Frames, ball_volume, decompose, frames, grad_A_squared, sphere_area, surface_area, enclosed_volume

SQRT2 = math.sqrt(2.0)
DEFAULT_ALPHAS = (SQRT2, 2.0)
P_FLOOR = 1e-8


class MissingThreshold(KeyError):
    def __init__(self, alpha):
        super().__init__(f"no threshold c(alpha) for alpha = {alpha}")
        self.alpha = alpha


@dataclass(frozen=True)
class Tolerances:
    slack: float = 0.05  # relative slack on ledger constants
    kp_ratio: float = 1e-3
    h_rel: float = 1e-8  # times c1
    H_rel: float = 1e-6  # times max |H|
    cap_rel: float = 1e-3  # v_tilde <= alpha (1 + cap_rel) on caps
    a2_window: int = 1000
    t_burn: float = 0.1


@dataclass(frozen=True)
class BoundLedger:
    topology: Topology
    n: int
    area0: float
    V: float
    R: float
    l: dict
    c_star: dict
    c1: float
    c2: dict
    kp0: float
    iso_floor: float
    alpha_list: tuple
    c_alpha: dict

    @property
    def l_min(self) -> float:
        return min(self.l.values())

    @property
    def c_star_min(self) -> float:
        return min(self.c_star.values())

    def as_dict(self) -> dict:
        return {
            "topology": self.topology.value, "n": self.n, "area0": self.area0, "V": self.V, "R": self.R,
            "l": _keyed(self.l), "c_star": _keyed(self.c_star), "c1": self.c1, "c2": _keyed(self.c2),
            "kp0": self.kp0, "iso_floor": self.iso_floor, "alpha_list": list(self.alpha_list),
            "c_alpha": _keyed(self.c_alpha),
        }


def _keyed(d: Mapping[float, float]) -> dict:
    return {repr(float(k)): float(v) for k, v in d.items()}


@dataclass(frozen=True)
class Check:
    check_id: str
    passed: bool
    measured: float
    bound: float
    margin: float
    location: int | None = None
    hard: bool = True
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "id": self.check_id, "pass": self.passed, "measured": _num(self.measured), "bound": _num(self.bound),
            "margin": _num(self.margin), "location": self.location, "hard": self.hard, "note": self.note,
        }


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else repr(x)


@dataclass(frozen=True)
class MonitorReport:
    t: float
    step: int
    checks: tuple
    worst_margin: float
    values: dict = field(default_factory=dict)  # raw measurements for the time series

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.hard)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if c.hard and not c.passed]

    def get(self, check_id: str) -> list:
        return [c for c in self.checks if c.check_id == check_id or c.check_id.startswith(check_id + "@")]

    def as_dict(self) -> dict:
        return {
            "t": self.t, "step": self.step, "passed": self.passed, "worst_margin": _num(self.worst_margin),
            "checks": [c.as_dict() for c in self.checks],
        }


# --------------------------------------------------------------------------
# ledger


def isoperimetric_floor(V: float, n: int, topology: Topology) -> float:
    omega = ball_volume(n + 1)
    if topology is Topology.CLOSED:
        return (n + 1) * omega * (V / omega) ** (n / (n + 1))
    return 0.5 * (n + 1) * omega * (2.0 * V / omega) ** (n / (n + 1))


def default_c_alpha(curve, fr: Frames, alpha_list: Sequence[float]) -> dict:
    """Half the smallest height on the cylindrical part, per alpha."""
    out = {}
    for a in alpha_list:
        dec = decompose(curve, fr, a)
        nodes = dec.cylinder_nodes
        u = fr.u[nodes]
        u = u[u > 0]
        if u.size == 0:
            # the whole curve is cap; fall back to the smallest positive height
            u = fr.u[fr.u > 0]
        out[float(a)] = 0.5 * float(u.min())
    return out


def kp_ratio(fr: Frames) -> tuple[float, int | None]:
    sel = np.flatnonzero(fr.p > P_FLOOR)
    if sel.size == 0:
        return math.nan, None
    ratio = fr.k[sel] / fr.p[sel]
    j = int(np.argmax(ratio))
    return float(ratio[j]), int(sel[j])


def ledger_from_initial(state0, c_alpha: Mapping[float, float] | None = None,
                        alpha_list: Sequence[float] = DEFAULT_ALPHAS, fr: Frames | None = None) -> BoundLedger:
    curve = state0.curve if hasattr(state0, "curve") else state0
    topo, n = curve.topology, curve.n
    if topo is Topology.OPEN:
        raise ValueError("bounds are defined for free-boundary and closed profiles only")
    fr = frames(curve) if fr is None else fr
    alpha_list = tuple(float(a) for a in alpha_list)
    if any(not a > 1 for a in alpha_list):
        raise ValueError("every alpha must exceed 1")
    defaults = default_c_alpha(curve, fr, alpha_list)
    c_map = {}
    given = {float(k): float(v) for k, v in (c_alpha or {}).items()}
    for a in alpha_list:
        if c_alpha is not None and a not in given:
            raise MissingThreshold(a)
        c = given.get(a, defaults[a])
        if not c > 0:
            raise MissingThreshold(a)
        c_map[a] = c

    M0 = surface_area(curve)
    V = enclosed_volume(curve)
    omega, sigma = ball_volume(n), sphere_area(n)
    closed = topo is Topology.CLOSED
    R = (M0 / (2 * omega if closed else omega)) ** (1.0 / n)
    l, c_star = {}, {}
    for a in alpha_list:
        c = c_map[a]
        tip = R * math.sqrt(a * a - 1)
        l[a] = M0 / (n * omega * c ** (n - 1)) + (2 * tip if closed else tip)
        c_star[a] = M0 / (sigma * c ** (n - 1)) + (2 * l[a] + 2 * R if closed else l[a] + R)
    iso = isoperimetric_floor(V, n, topo)
    a_best = min(alpha_list, key=lambda a: l[a] + 0.5 * math.pi * c_star[a])
    c1 = sigma * (n - 1) * R ** (n - 2) * (l[a_best] + 0.5 * math.pi * c_star[a_best]) / iso
    c2 = {}
    for a in alpha_list:
        # v is only controlled away from the tips, so its t=0 maximum is taken there
        v0 = fr.v[decompose(curve, fr, a).cylinder_nodes]
        v0 = v0[np.isfinite(v0)]
        v0max = float(v0.max()) if v0.size else 1.0
        c2[a] = max(a / math.sqrt(a * a - 1), 1.0, v0max, 2 * c1 * R / (n - 1))
    kp, _ = kp_ratio(fr)
    kp0 = max(1.0, kp) if math.isfinite(kp) else 1.0
    return BoundLedger(topo, n, M0, V, R, l, c_star, c1, c2, kp0, iso, alpha_list, c_map)


# --------------------------------------------------------------------------
# checks


def pinch_guard(state, fr: Frames | None, epsilon: float):
    """``None`` if fine, else ``(node, r_min)`` of the thinnest neck.

    A neck is a non-pole node where r has a local minimum below
    ``epsilon``; a node on or across the axis always counts. The stepper
    applies the same rule before every step.
    """
    curve = state.curve if hasattr(state, "curve") else state
    if epsilon <= 0:
        return None
    j, rmin = _kernels.find_neck(np.ascontiguousarray(curve.r), curve.topology.code, float(epsilon))
    return None if j < 0 else (int(j), float(rmin))


def _upper(cid, measured, bound, location=None, hard=True, note=""):
    ok = bool(measured <= bound) if math.isfinite(measured) else False
    margin = (bound - measured) / abs(bound) if bound != 0 else -measured
    return Check(cid, ok, float(measured), float(bound), float(margin), location, hard, note)


def _lower(cid, measured, bound, location=None, hard=True, note=""):
    ok = bool(measured >= bound) if math.isfinite(measured) else False
    margin = (measured - bound) / abs(bound) if bound != 0 else measured
    return Check(cid, ok, float(measured), float(bound), float(margin), location, hard, note)


def _poles(curve):
    """(d, e): axial positions of the right and left tips."""
    d = float(curve.x[-1])
    e = float(curve.x[0])
    return d, e


class Monitor:
    """Stateful checker; check (j) needs the history of max |A|^2."""

    def __init__(self, ledger: BoundLedger, tol: Tolerances = Tolerances()):
        self.ledger = ledger
        self.tol = tol
        self._a2 = []  # (step, max A2) after burn-in
        self.running_kp = -math.inf

    def check(self, state, fr: Frames | None = None) -> MonitorReport:
        L, tol = self.ledger, self.tol
        curve = state.curve
        fr = frames(curve) if fr is None else fr
        s = 1.0 + tol.slack
        closed = L.topology is Topology.CLOSED
        checks = []
        values = {}

        j = int(np.argmax(fr.u))
        values["max_u"] = float(fr.u[j])
        checks.append(_upper("a", fr.u[j], L.R * s, j))

        d, e = _poles(curve)
        values["d"], values["e"] = d, (e if closed else math.nan)
        j = int(np.argmax(fr.u_tilde))
        values["max_u_tilde"] = float(fr.u_tilde[j])
        if closed:
            checks.append(_upper("b", d - e, L.l_min * s, None, note="d - e"))
        else:
            checks.append(_upper("b", fr.u_tilde[j], L.l_min * s, j))

        length = curve.length
        values["curve_length"] = length
        checks.append(_upper("c", length, L.c_star_min * s))

        h = state.h
        values["h"] = h
        checks.append(_lower("d_lower", h, -tol.h_rel * L.c1))
        checks.append(_upper("d_upper", h, L.c1 * s))

        Hmax = float(np.max(np.abs(fr.H)))
        values["max_abs_H"] = Hmax
        for a in L.alpha_list:
            dec = decompose(curve, fr, a)
            tag = f"@{a:.6g}"
            cap = dec.cap_nodes
            cyl = dec.cylinder_nodes
            if cap.size:
                vt = fr.v_tilde[cap]
                k = int(np.argmax(vt))
                checks.append(_upper("e_cap" + tag, vt[k], a * (1 + tol.cap_rel), int(cap[k])))
                vt_max = float(vt[k])
            else:
                vt_max = math.nan
            if cyl.size:
                vv = fr.v[cyl]
                k = int(np.argmax(vv))
                checks.append(_upper("e_cyl" + tag, vv[k], L.c2[a] * s, int(cyl[k])))
                cu = fr.u[cyl]
                k = int(np.argmin(cu))
                checks.append(_lower("f" + tag, cu[k], L.c_alpha[a], int(cyl[k])))
                min_u = float(cu[k])
            else:
                min_u = math.nan
            if abs(a - SQRT2) < 1e-12:
                values["min_cyl_u_alpha_sqrt2"] = min_u
                values["v_tilde_max_cap_sqrt2"] = vt_max
                Hcut = [cp.interpolate(fr.H) for cp in dec.caps if not dec.degenerate]
                values["H_at_sqrt2_cut"] = min(Hcut) if Hcut else math.nan
                for cp, hv in zip(dec.caps, Hcut):
                    checks.append(_lower("h_" + cp.side, hv, -tol.H_rel * Hmax, cp.cut_index))

        span = d - e if closed else d
        checks.append(_lower("g", span, L.V / (ball_volume(L.n) * L.R ** L.n)))

        kp, where = kp_ratio(fr)
        values["max_kp_ratio"] = kp
        if math.isfinite(kp):
            self.running_kp = max(self.running_kp, kp)
        checks.append(_upper("i", kp, L.kp0 * (1 + tol.kp_ratio), where))

        a2 = float(fr.A2.max())
        values["max_A2"] = a2
        step = int(state.step_index)
        if state.t > tol.t_burn:
            self._a2.append((step, a2))
            recent = [v for (st, v) in self._a2 if st >= step - tol.a2_window]
            base = min(recent)
            checks.append(_upper("j", a2, 2 * base, int(np.argmax(fr.A2)), note="no doubling within the window"))
        else:
            checks.append(Check("j", True, a2, math.inf, math.inf, None, True, "burn-in"))

        g2 = grad_A_squared(curve, fr, "codazzi")
        checks.append(Check("k", True, float(np.sqrt(np.nanmax(g2))), math.inf, math.inf, None, False, "diagnostic"))

        hard = [c.margin for c in checks if c.hard and math.isfinite(c.margin)]
        worst = min(hard) if hard else math.inf
        return MonitorReport(float(state.t), step, tuple(checks), float(worst), values)


def check(state, fr: Frames | None, ledger: BoundLedger, tol: Tolerances = Tolerances()) -> MonitorReport:
    """One-off check without history (check (j) then only sees this sample)."""
    return Monitor(ledger, tol).check(state, fr)
