"""Detecting arrival at a constant-mean-curvature limit.

The limit is predicted from the enclosed volume rather than fitted, so the
reported shape deviation measures distance from the expected sphere or
hemisphere itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curve import ProfileCurve, Topology
from .geometry import Frames, ball_volume, enclosed_volume, frames

DEFAULT_TOL_SHAPE = 1e-3


@dataclass(frozen=True)
class ConvergenceReport:
    t: float
    sup_dev_H: float
    l2_dev_H: float
    fitted_radius: float
    fitted_center_x: float
    shape_dev: float
    converged: bool
    tol_cmc: float
    tol_shape: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def cmc_deviation(state, fr: Frames | None = None) -> tuple[float, float]:
    """(max |H - h|, area-weighted RMS of H - h), with h the area average."""
    curve = _curve(state)
    fr = frames(curve) if fr is None else fr
    w = fr.weights
    h = float(np.sum(fr.H * w) / np.sum(w))
    dev = fr.H - h
    return float(np.max(np.abs(dev))), float(math.sqrt(np.sum(w * dev * dev) / np.sum(w)))


def limit_radius(curve: ProfileCurve, volume: float | None = None) -> float:
    """Radius of the sphere (Closed) or hemisphere (free boundary) of equal volume."""
    V = enclosed_volume(curve) if volume is None else volume
    omega = ball_volume(curve.n + 1)
    if curve.topology is Topology.CLOSED:
        return (V / omega) ** (1.0 / (curve.n + 1))
    return (2.0 * V / omega) ** (1.0 / (curve.n + 1))


def volume_centroid(curve: ProfileCurve) -> float:
    """Axial centroid of the enclosed solid of revolution.

    Uses the oriented line integral of x r^n dx along the chords, exact for
    piecewise-linear profiles in the case n = 1 and second order otherwise.
    """
    x, r, n = curve.x, curve.r, curve.n
    dx = np.diff(x)
    xm = 0.5 * (x[:-1] + x[1:])
    rn = 0.5 * (r[:-1] ** n + r[1:] ** n)
    xrn = 0.5 * (x[:-1] * r[:-1] ** n + x[1:] * r[1:] ** n)
    den = float(np.sum(dx * rn))
    return float(np.sum(dx * xrn) / den) if den != 0 else float(np.mean(xm))


def fit_limit_shape(state) -> tuple[float, float, float]:
    """(radius, center_x, shape_dev) of the predicted limit."""
    curve = _curve(state)
    volume = getattr(state, "volume", None)
    radius = limit_radius(curve, volume)
    if curve.topology is Topology.CLOSED:
        center = volume_centroid(curve)
    else:
        center = 0.0
    dist = np.hypot(curve.x - center, curve.r)
    return radius, center, float(np.max(np.abs(dist - radius)))


def default_tol_cmc(curve: ProfileCurve, radius: float | None = None) -> float:
    radius = limit_radius(curve) if radius is None else radius
    return 1e-4 * curve.n / radius


def is_converged(state, fr: Frames | None = None, tol_cmc: float | None = None,
                 tol_shape: float = DEFAULT_TOL_SHAPE) -> ConvergenceReport:
    curve = _curve(state)
    fr = frames(curve) if fr is None else fr
    sup, l2 = cmc_deviation(curve, fr)
    radius, center, dev = fit_limit_shape(state)
    if tol_cmc is None:
        tol_cmc = default_tol_cmc(curve, radius)
    if not (tol_cmc > 0 and tol_shape > 0):
        raise ValueError("tolerances must be positive")
    ok = curve.topology is not Topology.OPEN and sup <= tol_cmc and dev <= tol_shape * radius
    return ConvergenceReport(float(getattr(state, "t", 0.0)), sup, l2, radius, center, dev, bool(ok), tol_cmc, tol_shape)


def empirical_rate(times, sup_devs) -> float:
    """Least-squares exponential decay rate of sup|H - h| (reported only)."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(sup_devs, dtype=float)
    keep = (y > 0) & np.isfinite(y)
    if keep.sum() < 2:
        return math.nan
    slope = np.polyfit(t[keep], np.log(y[keep]), 1)[0]
    return float(-slope)


def _curve(state) -> ProfileCurve:
    return state if isinstance(state, ProfileCurve) else state.curve
