"""
Copyright 2026 [kinkscope contributors]

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""

from __future__ import annotations

import logging
import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from kinkscope.core.lattice import l1_distance
from kinkscope.core.open_dynamics import default_window, fringe_visibility, interpolated_extrema
from kinkscope.core.trace_buffer import ProbabilityTrace

log = logging.getLogger(__name__)

Window = Optional[Tuple[float, float]]


def mean_position(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    return float(np.dot(np.arange(p.size), p) / p.sum())


def variance(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    n = np.arange(p.size)
    mu = mean_position(p)
    return float(np.dot((n - mu) ** 2, p) / p.sum())


def fringe_spacing(p: np.ndarray, window: Window = None) -> float:
    """Mean gap between adjacent interpolated minima inside the window."""
    _, _, xmin, _ = interpolated_extrema(p, window)
    if xmin.size < 2:
        raise ValueError(f"need two minima to measure a fringe spacing (found {xmin.size})")
    return float(np.mean(np.diff(np.sort(xmin))))


def peak_ratio(p: np.ndarray, window: Window = None) -> float:
    """Height of the larger neighbour of the main peak over the main peak."""
    xmax, vmax, _, _ = interpolated_extrema(p, window)
    if xmax.size < 2:
        raise ValueError(f"need two maxima for a peak ratio (found {xmax.size})")
    order = np.argsort(xmax)
    xmax, vmax = xmax[order], vmax[order]
    i = int(np.argmax(vmax))
    neighbours = [vmax[j] for j in (i - 1, i + 1) if 0 <= j < vmax.size]
    return float(max(neighbours) / vmax[i])


def outer_fringe_mass(p: np.ndarray, window: Window = None) -> float:
    """Probability beyond the first minimum on each side of the main peak."""
    p = np.asarray(p, dtype=float)
    xmax, vmax, xmin, _ = interpolated_extrema(p, window)
    if xmax.size == 0:
        raise ValueError("no maximum inside the window")
    centre = float(xmax[int(np.argmax(vmax))])
    left = xmin[xmin < centre]
    right = xmin[xmin > centre]
    if left.size == 0 or right.size == 0:
        raise ValueError("main peak is not bracketed by minima")
    n = np.arange(p.size)
    lo, hi = float(left.max()), float(right.min())
    return float(p[n < lo].sum() + p[n > hi].sum())


def mirror_residual(p: np.ndarray) -> float:
    """max |p_n - p_{M-1-n}|; zero for a pattern symmetric about the lattice midpoint."""
    p = np.asarray(p, dtype=float)
    return float(np.max(np.abs(p - p[::-1])))


def visibility_or_zero(p: np.ndarray, window: Window = None) -> float:
    """Fringe visibility, or 0 when the window holds no interior minimum."""
    try:
        return fringe_visibility(p, window)
    except ValueError:
        return 0.0


def visibility_half_life(times: Sequence[float], visibilities: Sequence[float], level: float = 0.5) -> float:
    """First time the visibility falls to level, by linear interpolation."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(visibilities, dtype=float)
    below = np.flatnonzero(v <= level)
    if below.size == 0:
        raise ValueError(f"visibility never falls to {level}")
    k = int(below[0])
    if k == 0:
        return float(t[0])
    t0, t1, v0, v1 = t[k - 1], t[k], v[k - 1], v[k]
    return float(t0 + (v0 - level) * (t1 - t0) / (v0 - v1))


def fit_power_law(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    """(exponent, prefactor) of y = a x^k by least squares in log-log."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    k, a = np.polyfit(lx, ly, 1)
    return float(k), float(math.exp(a))


def variance_series(trace: ProbabilityTrace) -> np.ndarray:
    return np.array([variance(p) for p in trace.distributions])


def variance_slope(times: Sequence[float], variances: Sequence[float], tail: float = 1.0) -> float:
    """
    Least-squares slope of the variance over the last `tail` fraction of the
    samples (tail=1 uses all of them).
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(variances, dtype=float)
    if t.size < 2:
        return float("nan")
    start = min(t.size - 2, int(math.floor((1.0 - tail) * t.size)))
    slope, _ = np.polyfit(t[start:], v[start:], 1)
    return float(slope)


def _or_nan(fn, *args) -> float:
    try:
        return float(fn(*args))
    except ValueError:
        return float("nan")


def metrics_from_trace(trace: ProbabilityTrace, oracle: Optional[ProbabilityTrace] = None) -> Dict[str, float]:
    """
    Report for the final distribution of a trace plus time-series metrics.
    Quantities that cannot be measured (no fringes, one sample) are NaN.
    """
    p = trace.final
    window = default_window(p)
    var = variance_series(trace)
    out: Dict[str, float] = {
        "t_final": float(trace.times[-1]),
        "n_links": float(trace.n_links),
        "fringe_spacing": _or_nan(fringe_spacing, p, window),
        "visibility": visibility_or_zero(p, window),
        "peak_ratio": _or_nan(peak_ratio, p, window),
        "outer_fringe_mass": _or_nan(outer_fringe_mass, p, window),
        "mirror_residual": mirror_residual(p),
        "variance_final": float(var[-1]),
        "variance_slope": variance_slope(trace.times, var),
        "norm_drift": float(np.max(np.abs(trace.distributions.sum(axis=1) - 1.0))),
        "max_mirror_residual": float(max(mirror_residual(q) for q in trace.distributions)),
    }
    if oracle is not None:
        if oracle.n_links != trace.n_links:
            raise ValueError(f"oracle has {oracle.n_links} links, trace has {trace.n_links}")
        out["l1_to_oracle"] = l1_distance(p, oracle.final)
        if np.array_equal(oracle.times, trace.times):
            out["max_l1_to_oracle"] = float(max(l1_distance(a, b) for a, b in zip(trace.distributions, oracle.distributions)))
    return out


def decay_rate(times: Sequence[float], curve: Sequence[float]) -> float:
    """Least-squares rate k of curve ~ exp(-k t); 0 for a flat curve."""
    t = np.asarray(times, dtype=float)
    c = np.asarray(curve, dtype=float)
    if t.size < 2:
        raise ValueError("need two samples to fit a decay rate")
    if np.any(c <= 0.0):
        raise ValueError("decay curve must stay positive")
    slope, _ = np.polyfit(t, np.log(c), 1)
    return float(-slope)


def ghz_metrics(times: Sequence[float], coherence: Sequence[float], expected: Sequence[float]) -> Dict[str, float]:
    fitted = decay_rate(times, coherence)
    target = decay_rate(times, expected)
    err = abs(fitted - target)
    return {
        "ghz_fitted_rate": fitted,
        "ghz_expected_rate": target,
        "ghz_relative_error": err / target if target > 0.0 else err,
    }
