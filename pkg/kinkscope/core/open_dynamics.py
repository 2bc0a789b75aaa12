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
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.signal import fftconvolve, find_peaks

from kinkscope.core.eigencache import EIGEN_CACHE, EigenCache
from kinkscope.core.lattice import (
    RHO_TOL,
    KinkDensityMatrix,
    LatticeSpec,
    check_edge_contact,
    tridiagonal_bands,
)
from kinkscope.core.trace_buffer import ProbabilityTrace, TraceRecorder
from kinkscope.utils.errors import ConfigError, InvariantViolation
from kinkscope.utils.timebase import Stopwatch

log = logging.getLogger(__name__)

DIAG_FLOOR = -1e-8
MAX_HOP_STEP = 0.1
MAX_DEPHASING_STEP = 0.5


@dataclass(frozen=True)
class DephasingConfig:
    """
    gamma is the per-spin dephasing rate. dt=None picks the largest step
    meeting both dt*4g <= 0.1 and dt*gamma*(M-1) <= 0.5. times empty means
    a single output at t_end.
    """

    gamma: float
    dt: Optional[float] = None
    times: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not float(self.gamma) >= 0.0:
            raise ConfigError("dephasing rate must be >= 0", gamma=self.gamma)
        if self.dt is not None and not float(self.dt) > 0.0:
            raise ConfigError("integrator step must be > 0", dt=self.dt)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))

    def step_for(self, n_links: int, g: float) -> float:
        bound_hop = MAX_HOP_STEP / (4.0 * g) if g > 0.0 else math.inf
        bound_deph = MAX_DEPHASING_STEP / (self.gamma * (n_links - 1)) if self.gamma > 0.0 and n_links > 1 else math.inf
        if self.dt is None:
            step = min(bound_hop, bound_deph)
            return 0.1 if math.isinf(step) else step
        dt = float(self.dt)
        if dt * 4.0 * g > MAX_HOP_STEP * (1.0 + 1e-12):
            raise ConfigError(
                f"step {dt:g} violates dt*4g <= {MAX_HOP_STEP}", dt=dt, g=g, module="open-dynamics",
            )
        if dt > bound_deph * (1.0 + 1e-12):
            log.warning(
                "step %.4g exceeds dephasing bound %.4g (gamma=%g, M=%d); splitting error grows as g^2*gamma*dt^3",
                dt, bound_deph, self.gamma, n_links,
            )
        return dt


# public API


def evolve_master(
    rho: KinkDensityMatrix,
    h: np.ndarray,
    cfg: DephasingConfig,
    t_end: float,
    spec: Optional[LatticeSpec] = None,
    guard: int = 20,
    on_status: Optional[Callable[[str], None]] = None,
    cache: EigenCache = EIGEN_CACHE,
) -> Tuple[ProbabilityTrace, KinkDensityMatrix]:
    """
    Dephasing master equation
        d rho_mn/dt = -i[H, rho]_mn - gamma |m-n| rho_mn
    by Strang splitting with exact sub-flows: unitary half step, elementwise
    decay e^{-gamma |m-n| dt}, unitary half step. Consecutive half steps
    between outputs are merged.

    Times in cfg are measured from rho.time = 0; spec (optional) enables the
    guard-band check on effectively-infinite lattices.
    """
    diag, off = tridiagonal_bands(h)
    m = len(diag)
    if rho.n_links != m:
        raise ConfigError("density matrix and Hamiltonian sizes differ", rho=rho.n_links, hamiltonian=m)
    g = float(np.max(np.abs(off))) if off.size else 0.0
    dt = cfg.step_for(m, g)

    times = np.asarray(cfg.times if cfg.times else (float(t_end),), dtype=float)
    if times[0] < 0.0 or (times.size > 1 and np.any(np.diff(times) <= 0.0)) or times[-1] > float(t_end) + 1e-12:
        raise ConfigError("output times must be increasing within [0, t_end]")

    status = on_status or (lambda _msg: None)
    rho.validate(RHO_TOL, DIAG_FLOOR, step="master-initial")
    dist = _distance_matrix(m)
    recorder = TraceRecorder(
        metadata={"n_links": m, "gamma": cfg.gamma, "dt": dt, "g": g, "t_end": float(t_end)}
    )

    sw = Stopwatch()
    r = np.array(rho.entries, dtype=complex)
    clock = 0.0
    factors: Dict[float, np.ndarray] = {}
    for i, t in enumerate(times):
        span = t - clock
        if span > 0.0:
            n = max(1, int(math.ceil(span / dt - 1e-9)))
            step = span / n
            vh = cache.propagator(diag, off, 0.5 * step)
            vf = cache.propagator(diag, off, step)
            decay = factors.get(step)
            if decay is None:
                decay = np.exp(-cfg.gamma * step * dist)
                factors[step] = decay
            r = vh @ r @ vh.conj().T
            for k in range(n):
                r *= decay
                if k < n - 1:
                    r = vf @ r @ vf.conj().T
            r = vh @ r @ vh.conj().T
            r = 0.5 * (r + r.conj().T)
            clock = t

        current = KinkDensityMatrix(entries=r, time=t).validate(RHO_TOL, DIAG_FLOOR, step="master")
        p = current.diagonal()
        if spec is not None:
            check_edge_contact(p, spec, t, guard=guard)
        recorder.push(t, p)
        status(f"master t={t:g} ({i + 1}/{times.size})")

    log.info("master equation: M=%d gamma=%g dt=%.4g, %d outputs in %.2fs", m, cfg.gamma, dt, times.size, sw.elapsed())
    return recorder.snapshot(), KinkDensityMatrix(entries=r, time=float(times[-1]))


def strong_decoherence_reduced(
    p0: Sequence[float],
    g: float,
    gamma: float,
    t_end: float,
    times: Optional[Sequence[float]] = None,
    rtol: float = 1e-10,
    atol: float = 1e-14,
) -> ProbabilityTrace:
    """
    Diagonal p_n plus the first off-diagonal s_n on the M-1 bonds:
        dp_n/dt = g (s_{n-1} - s_n)
        ds_n/dt = -gamma s_n - 2g (p_{n+1} - p_n)
    with s = 0 beyond the hard walls. s starts at zero.
    """
    p0 = np.asarray(p0, dtype=float)
    m = p0.shape[0]
    g = float(g)
    gamma = float(gamma)
    if gamma < 5.0 * g:
        log.warning("strong-decoherence closure outside its regime: gamma=%g < 5g=%g", gamma, 5.0 * g)
    t_eval = np.asarray(times if times is not None else (float(t_end),), dtype=float)

    def rhs(_t: float, y: np.ndarray) -> np.ndarray:
        p, s = y[:m], y[m:]
        flux = np.zeros(m + 1)
        flux[1:m] = s
        dp = g * (flux[:-1] - flux[1:])
        ds = -gamma * s - 2.0 * g * np.diff(p)
        return np.concatenate((dp, ds))

    y0 = np.concatenate((p0, np.zeros(m - 1)))
    max_step = 0.1 / gamma if gamma > 0.0 else np.inf
    sol = solve_ivp(
        rhs, (0.0, float(t_end)), y0, method="RK45", t_eval=t_eval,
        rtol=rtol, atol=atol, max_step=max_step,
    )
    if not sol.success:
        raise InvariantViolation(f"reduced integrator failed: {sol.message}", module="open-dynamics", step="solve_ivp")
    return ProbabilityTrace(
        times=sol.t,
        distributions=sol.y[:m].T,
        metadata={"closure": "strong", "g": g, "gamma": gamma, "n_links": m},
    )


def diffusion_oracle(p0: Sequence[float], D: float, t: float) -> np.ndarray:
    """Gaussian spread of variance 2Dt, renormalized on the lattice."""
    p0 = np.asarray(p0, dtype=float)
    width = 2.0 * float(D) * float(t)
    if width == 0.0:
        return p0.copy()
    if width < 5.0:
        log.warning("diffusion oracle below its regime: 2Dt = %.3g < 5", width)
    d = np.arange(-(p0.size - 1), p0.size)
    kernel = np.exp(-d * d / (2.0 * width)) / math.sqrt(2.0 * math.pi * width)
    return _convolve_renormalized(p0, kernel)


def lorentzian_oracle(p_pure: Sequence[float], g: float, gamma: float, t: float) -> np.ndarray:
    """
    Lorentzian blur of half-width l = g*gamma*t^2 applied to the pure-state
    distribution at time t. The kernel is normalized by its lattice sum.
    """
    p = np.asarray(p_pure, dtype=float)
    if gamma > 0.1 * g:
        log.warning("weak-decoherence closure outside its regime: gamma=%g > 0.1g", gamma)
    l = float(g) * float(gamma) * float(t) ** 2
    if l == 0.0:
        return p.copy()
    d = np.arange(-(p.size - 1), p.size, dtype=float)
    kernel = l / (l * l + d * d)
    return _convolve_renormalized(p, kernel / kernel.sum())


def lorentzian_width(g: float, gamma: float, t: float) -> float:
    return float(g) * float(gamma) * float(t) ** 2


def lorentzian_crossover_time(gamma: float, gamma0: float) -> float:
    """Time gamma0/(2 gamma) after which the blur outgrows the packet tails."""
    if not gamma > 0.0:
        raise ValueError("gamma must be > 0")
    return float(gamma0) / (2.0 * float(gamma))


def diffusion_constant(g: float, gamma: float) -> float:
    if not gamma > 0.0:
        raise ValueError("gamma must be > 0")
    return 2.0 * g * g / gamma


def decoherence_time(gamma: float, L: float) -> float:
    if not gamma > 0.0:
        raise ValueError(f"gamma must be > 0 (got {gamma})")
    if L < 1:
        raise ValueError(f"L must be >= 1 (got {L})")
    return 4.0 * math.pi / (float(gamma) * float(L))


def default_window(p: np.ndarray) -> Tuple[float, float]:
    """mean +/- one standard deviation of the distribution."""
    p = np.asarray(p, dtype=float)
    n = np.arange(p.size)
    total = p.sum()
    mean = float(np.dot(n, p) / total)
    std = float(math.sqrt(max(np.dot((n - mean) ** 2, p) / total, 0.0)))
    return mean - std, mean + std


def interpolated_extrema(
    p: np.ndarray,
    window: Optional[Tuple[float, float]] = None,
    rel_prominence: float = 1e-3,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    (max positions, max values, min positions, min values) inside the
    window, each refined by a parabola through the discrete extremum and
    its neighbours. Extrema less prominent than rel_prominence * max(p)
    are ripple, not fringes.
    """
    p = np.asarray(p, dtype=float)
    lo, hi = default_window(p) if window is None else window
    prominence = rel_prominence * float(p.max())
    idx_max, _ = find_peaks(p, prominence=prominence)
    idx_min, _ = find_peaks(-p, prominence=prominence)

    def refine(idx: np.ndarray):
        idx = idx[(idx >= lo) & (idx <= hi)]
        pos = np.empty(idx.size)
        val = np.empty(idx.size)
        for k, i in enumerate(idx):
            a, b, c = p[i - 1], p[i], p[i + 1]
            den = a - 2.0 * b + c
            shift = 0.5 * (a - c) / den if den != 0.0 else 0.0
            pos[k] = i + shift
            val[k] = b - 0.25 * (a - c) * shift
        return pos, val

    xmax, vmax = refine(idx_max)
    xmin, vmin = refine(idx_min)
    return xmax, vmax, xmin, np.clip(vmin, 0.0, None)


def fringe_visibility(p: Sequence[float], window: Optional[Tuple[float, float]] = None) -> float:
    """
    (p_max - p_min)/(p_max + p_min) over interpolated extrema in the window
    (default: mean +/- std of p).
    """
    xmax, vmax, xmin, vmin = interpolated_extrema(np.asarray(p, dtype=float), window)
    if xmax.size == 0 or xmin.size == 0:
        raise ValueError(
            f"need a maximum and a minimum in the window (found {xmax.size} maxima, {xmin.size} minima)"
        )
    pmax = float(vmax.max())
    pmin = float(vmin.min())
    return float(min(1.0, max(0.0, (pmax - pmin) / (pmax + pmin))))


# internal usage


def _distance_matrix(m: int) -> np.ndarray:
    n = np.arange(m)
    return np.abs(n[:, None] - n[None, :]).astype(float)


def _convolve_renormalized(p: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    half = (kernel.size - 1) // 2
    full = fftconvolve(p, kernel)
    out = np.clip(full[half:half + p.size], 0.0, None)
    total = out.sum()
    if not total > 0.0:
        raise ValueError("convolution left no probability on the lattice")
    return out / total
