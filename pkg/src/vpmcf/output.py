"""Writers for the time series, monitor log, diagnostics and SVG snapshots."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .convergence import ConvergenceReport
from .curve import Topology
from .geometry import Frames, decompose

SERIES_COLUMNS = (
    "t", "step", "area", "volume", "h", "sup_H_minus_h", "l2_H_minus_h", "max_u", "max_u_tilde",
    "curve_length", "d", "e", "max_kp_ratio", "max_A2", "min_cyl_u_alpha_sqrt2", "v_tilde_max_cap_sqrt2",
    "H_at_sqrt2_cut", "shape_dev", "converged",
)
SQRT2 = math.sqrt(2.0)


def fmt(value) -> str:
    """Round-trip float formatting, stable across runs."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def series_row(state, fr: Frames, conv: ConvergenceReport) -> dict:
    curve = state.curve
    closed = curve.topology is Topology.CLOSED
    dec = decompose(curve, fr, SQRT2)
    cyl, cap = dec.cylinder_nodes, dec.cap_nodes
    sel = fr.p > 1e-8
    kp = float(np.max(fr.k[sel] / fr.p[sel])) if sel.any() else math.nan
    cuts = [c.interpolate(fr.H) for c in dec.caps] if not dec.degenerate else []
    return {
        "t": state.t,
        "step": state.step_index,
        "area": state.area,
        "volume": state.volume,
        "h": state.h,
        "sup_H_minus_h": conv.sup_dev_H,
        "l2_H_minus_h": conv.l2_dev_H,
        "max_u": float(fr.u.max()),
        "max_u_tilde": float(fr.u_tilde.max()),
        "curve_length": curve.length,
        "d": float(curve.x[-1]),
        "e": float(curve.x[0]) if closed else math.nan,
        "max_kp_ratio": kp,
        "max_A2": float(fr.A2.max()),
        "min_cyl_u_alpha_sqrt2": float(fr.u[cyl].min()) if cyl.size else math.nan,
        "v_tilde_max_cap_sqrt2": float(fr.v_tilde[cap].max()) if cap.size else math.nan,
        "H_at_sqrt2_cut": min(cuts) if cuts else math.nan,
        "shape_dev": conv.shape_dev,
        "converged": conv.converged,
    }


class SeriesWriter:
    def __init__(self, path: Path):
        self.fh = open(path, "w", newline="\n", encoding="ascii")
        self.fh.write(",".join(SERIES_COLUMNS) + "\n")

    def write(self, row: dict):
        self.fh.write(",".join(fmt(row[c]) for c in SERIES_COLUMNS) + "\n")

    def close(self):
        self.fh.close()


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, allow_nan=False)


class JsonLinesWriter:
    def __init__(self, path: Path):
        self.fh = open(path, "w", encoding="utf-8")

    def write(self, obj):
        self.fh.write(dumps(obj) + "\n")

    def close(self):
        self.fh.close()


def write_json(path: Path, obj):
    Path(path).write_text(json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# SVG


def profile_svg(state, fr: Frames, conv: ConvergenceReport | None, alpha_list=(SQRT2,), width: int = 640) -> str:
    """Static picture of the meridian curve in the (x, r) half-plane.

    Shows the axis, the plane x = 0 (free boundary), the cut planes of the
    cap decomposition for each alpha, and the predicted limit arc.
    """
    curve = state.curve
    xs, rs = curve.x, curve.r
    arc = None
    if conv is not None:
        c, R = conv.fitted_center_x, conv.fitted_radius
        phi = np.linspace(0.0, math.pi if curve.topology is Topology.CLOSED else 0.5 * math.pi, 181)
        if curve.topology is Topology.CLOSED:
            arc = (c - R * np.cos(phi), R * np.sin(phi))
        else:
            arc = (R * np.sin(phi), R * np.cos(phi))
    xmin = min(float(xs.min()), 0.0 if curve.topology is Topology.FREE_BOUNDARY else float(xs.min()))
    xmax = float(xs.max())
    rmax = float(rs.max())
    if arc is not None:
        xmin, xmax, rmax = min(xmin, arc[0].min()), max(xmax, arc[0].max()), max(rmax, arc[1].max())
    pad = 0.08 * max(xmax - xmin, rmax)
    xmin, xmax, rtop = xmin - pad, xmax + pad, rmax + pad
    rbot = -0.5 * pad
    scale = width / (xmax - xmin)
    height = int(math.ceil((rtop - rbot) * scale))

    def X(x):
        return (x - xmin) * scale

    def Y(r):
        return (rtop - r) * scale

    def path(x, r):
        return " ".join(f"{'M' if i == 0 else 'L'}{X(a):.3f},{Y(b):.3f}" for i, (a, b) in enumerate(zip(x, r)))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="0" y1="{Y(0):.3f}" x2="{width}" y2="{Y(0):.3f}" stroke="#888" stroke-dasharray="6,4"/>',
    ]
    if curve.topology is Topology.FREE_BOUNDARY:
        parts.append(f'<line x1="{X(0):.3f}" y1="0" x2="{X(0):.3f}" y2="{height}" stroke="#444" stroke-width="2"/>')
    for a in alpha_list:
        dec = decompose(curve, fr, a)
        for cut in dec.L_alpha_x:
            parts.append(f'<line x1="{X(cut):.3f}" y1="{Y(rtop):.3f}" x2="{X(cut):.3f}" y2="{Y(0):.3f}" '
                         f'stroke="#2a7" stroke-dasharray="3,3"><title>alpha={a:.6g}</title></line>')
    if arc is not None:
        parts.append(f'<path d="{path(*arc)}" fill="none" stroke="#c33" stroke-dasharray="5,3"/>')
    parts.append(f'<path d="{path(xs, rs)}" fill="none" stroke="#127" stroke-width="2"/>')
    parts.append(f'<text x="8" y="16" font-family="monospace" font-size="12">t = {state.t:.6g}  step {state.step_index}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
