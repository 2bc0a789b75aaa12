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

import enum
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import jv

from kinkscope.core.bound_states import (
    beat_frequency,
    double_well_bound_states,
    inverse_decay_length,
    well_pair,
)
from kinkscope.core.eigencache import EIGEN_CACHE, EigenCache, lowest_states
from kinkscope.core.lattice import (
    Boundary,
    KinkState,
    LatticeSpec,
    check_edge_contact,
    hamiltonian_bands,
    normalize,
    tridiagonal_bands,
)
from kinkscope.core.trace_buffer import ProbabilityTrace, TraceRecorder
from kinkscope.utils.errors import ConfigError, InvariantViolation, NonAdiabaticPreparation
from kinkscope.utils.timebase import Stopwatch

log = logging.getLogger(__name__)

STEP_NORM_TOL = 1e-10
RUN_NORM_TOL = 1e-8
MIN_FIDELITY = 0.99


class RampKind(str, enum.Enum):
    SUDDEN_OFF = "sudden-off"
    LINEAR = "linear"
    SMOOTH = "smooth"


@dataclass(frozen=True)
class RampSchedule:
    """
    Per-well multiplier s(tau): 1 before the ramp, 0 once it is over.
    """

    kind: RampKind = RampKind.SUDDEN_OFF
    duration: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", RampKind(self.kind))
        object.__setattr__(self, "duration", float(self.duration))
        if self.duration < 0.0:
            raise ConfigError("ramp duration must be >= 0", duration=self.duration)
        if self.kind is not RampKind.SUDDEN_OFF and self.duration == 0.0:
            raise ConfigError(f"{self.kind.value} ramp needs a positive duration")

    @property
    def is_sudden(self) -> bool:
        return self.kind is RampKind.SUDDEN_OFF or self.duration == 0.0

    def multiplier(self, tau: float) -> float:
        if tau <= 0.0:
            return 1.0
        if self.is_sudden or tau >= self.duration:
            return 0.0
        x = tau / self.duration
        if self.kind is RampKind.LINEAR:
            return 1.0 - x
        return 0.5 * (1.0 + math.cos(math.pi * x))


# public API


def eigen_propagate(
    state: KinkState,
    h: np.ndarray,
    dt: float,
    cache: EigenCache = EIGEN_CACHE,
) -> KinkState:
    """
    Exact propagation by dt under a time-independent tridiagonal H.
    """
    diag, off = tridiagonal_bands(h)
    return _evolve_bands(state, diag, off, dt, cache)


def bessel_free_propagate(state: KinkState, spec: LatticeSpec, t: float, guard: int = 20) -> KinkState:
    """
    Free hopping by Bessel-kernel convolution,
    psi_n(t) = sum_m i^(n-m) J_(n-m)(2gt) psi_m(0).
    Amplitude that would leave the lattice is dropped, which the edge check
    keeps below its threshold.
    """
    if spec.active_wells:
        raise ConfigError("bessel propagation requires free hopping (no wells)", wells=list(spec.active_wells))
    if spec.boundary is not Boundary.EFFECTIVELY_INFINITE:
        raise ConfigError("bessel propagation requires an effectively-infinite lattice")
    if state.n_links != spec.n_links:
        raise ConfigError("state and lattice sizes differ", state=state.n_links, lattice=spec.n_links)

    t = float(t)
    if t == 0.0:
        return state.at(state.amplitudes.copy(), state.time)

    psi = _bessel_convolve(state.amplitudes, bessel_kernel(spec.g, t, spec.n_links))
    out = state.at(psi, state.time + t)
    check_edge_contact(out.probabilities(), spec, out.time, guard=guard)
    return out.check_norm(RUN_NORM_TOL, step="bessel")


def bessel_kernel(g: float, t: float, n_links: int) -> np.ndarray:
    """
    K_d for d = -dmax..dmax. Past d = 2gt the kernel decays over an Airy
    width (2gt)^(1/3); twelve such widths put J_d^2 far below 1e-20.
    """
    z = 2.0 * float(g) * float(t)
    front = math.ceil(z) + 40 + math.ceil(12.0 * np.cbrt(z))
    dmax = int(min(int(n_links) - 1, front))
    d = np.arange(-dmax, dmax + 1)
    i_pow = np.array([1.0, 1.0j, -1.0, -1.0j])[d % 4]
    return i_pow * jv(d, z)


def prepare_psi_plus(
    spec: LatticeSpec,
    dynamical: bool = False,
    duration: Optional[float] = None,
    ramp: RampKind = RampKind.SMOOTH,
    dt: Optional[float] = None,
    min_fidelity: float = MIN_FIDELITY,
) -> KinkState:
    """
    Ground state of the double well. The dynamical path starts in the bound
    state of a single well of strength 2w on the midpoint link and ramps it
    into the two side wells; it needs an even separation.
    """
    n0, L, w = well_pair(spec)
    diag, off = hamiltonian_bands(spec)
    _, vecs = lowest_states(diag, off, 1)
    target = vecs[:, 0]
    target = -target if target.sum() < 0.0 else target
    exact = KinkState(amplitudes=normalize(target))
    if not dynamical:
        return exact

    if L % 2:
        raise ConfigError("dynamical preparation needs an even well separation", separation=L)
    threshold = 20.0 / (2.0 * beat_frequency(w, spec.g, L))
    T = threshold if duration is None else float(duration)
    if T < threshold:
        log.warning("preparation ramp %.4g shorter than adiabatic threshold %.4g", T, threshold)
    schedule = RampSchedule(RampKind(ramp), T)
    step = 0.01 / spec.g if dt is None else float(dt)

    center = n0 + L // 2
    start_spec = LatticeSpec(spec.n_sites, spec.g, ((center, 2.0 * w),), spec.boundary)
    sd, so = hamiltonian_bands(start_spec)
    _, v0 = lowest_states(sd, so, 1)
    psi = normalize(v0[:, 0])

    def potential(tau: float) -> np.ndarray:
        s = schedule.multiplier(tau)
        v = np.zeros(spec.n_links)
        v[center] = -4.0 * w * s
        v[n0] += -2.0 * w * (1.0 - s)
        v[n0 + L] += -2.0 * w * (1.0 - s)
        return v

    sw = Stopwatch()
    psi = _split_step(psi, off, potential, 0.0, T, step)
    fidelity = float(abs(np.vdot(exact.amplitudes, psi)) ** 2)
    log.info("dynamical psi+ preparation: T=%.4g fidelity=%.6f (%.1fs)", T, fidelity, sw.elapsed())
    if fidelity < min_fidelity:
        raise NonAdiabaticPreparation(
            f"preparation fidelity {fidelity:.4f} below {min_fidelity}",
            fidelity=fidelity, module="unitary-dynamics", step="prepare_psi_plus", duration=T,
        )
    return KinkState(amplitudes=psi, time=0.0).check_norm(RUN_NORM_TOL, step="prepare_psi_plus")


def left_well_state(spec: LatticeSpec) -> KinkState:
    """Bound state of the left well alone, on the same lattice."""
    n0, _, w = well_pair(spec)
    diag, off = hamiltonian_bands(spec.with_wells({n0: w}))
    _, vecs = lowest_states(diag, off, 1)
    v = vecs[:, 0]
    return KinkState(amplitudes=normalize(-v if v.sum() < 0.0 else v))


def prepare_bilocal_tunneling(spec: LatticeSpec, t: float) -> KinkState:
    """
    Left-well bound state after time t in the double well, kept to its
    psi+/psi- components: c+ psi+ e^{i omega t} + c- psi- e^{-i omega t}.
    """
    sol = double_well_bound_states(spec)
    phi = np.real(left_well_state(spec).amplitudes)
    c_plus = float(np.dot(sol.exact_plus, phi))
    c_minus = float(np.dot(sol.exact_minus, phi))
    omega = 0.5 * float(sol.exact_energies[1] - sol.exact_energies[0])
    t = float(t)
    psi = c_plus * sol.exact_plus * np.exp(1j * omega * t) + c_minus * sol.exact_minus * np.exp(-1j * omega * t)
    return KinkState(amplitudes=normalize(psi), time=t)


def sudden_switch_on(spec: LatticeSpec, t: float, cache: EigenCache = EIGEN_CACHE) -> KinkState:
    """
    Real-time preparation: the left-well bound state evolved under the full
    double-well Hamiltonian once the second well appears.
    """
    diag, off = hamiltonian_bands(spec)
    return _evolve_bands(left_well_state(spec), diag, off, float(t), cache)


def fringe_profile(x, L: float, gamma0: float, g: float, t: float, relative_phase: str = "1") -> np.ndarray:
    """
    Unnormalized interference pattern at offset x from the midpoint of the
    wells. relative_phase "i" shifts the cosine by a quarter period.
    """
    if relative_phase not in ("1", "i"):
        raise ValueError(f"relative_phase must be '1' or 'i' (got {relative_phase!r})")
    x = np.asarray(x, dtype=float)
    gt = float(g) * float(t)
    shift = 0.5 * math.pi if relative_phase == "i" else 0.0
    fringes = 1.0 + np.cos(x * L / (2.0 * gt) - shift)
    envelope = 1.0 / (1.0 + (x / (2.0 * gamma0 * gt)) ** 2) ** 2
    return fringes * envelope


def analytic_fringes(
    n0: int,
    L: int,
    gamma0: float,
    g: float,
    t: float,
    n_links: int,
    relative_phase: str = "1",
) -> np.ndarray:
    if not float(t) > 0.0:
        raise ValueError("fringe pattern needs t > 0")
    validity = 2.0 * g * gamma0 * gamma0 * t
    if validity < 5.0:
        log.warning("fringe formula outside its regime: 2 g gamma0^2 t = %.3g < 5", validity)
    x = np.arange(int(n_links)) - n0 - 0.5 * L
    p = fringe_profile(x, L, gamma0, g, t, relative_phase)
    return p / p.sum()


def fringes_for_spec(spec: LatticeSpec, t: float, relative_phase: str = "1") -> np.ndarray:
    n0, L, w = well_pair(spec)
    return analytic_fringes(n0, L, inverse_decay_length(w, spec.g), spec.g, t, spec.n_links, relative_phase)


def fringe_spacing_theory(g: float, t: float, L: float) -> float:
    return 4.0 * math.pi * g * t / L


def second_peak_ratio(L: float, gamma0: float) -> float:
    return 1.0 / (1.0 + 4.0 * math.pi ** 2 / (L * gamma0) ** 2) ** 2


def run_release(
    spec: LatticeSpec,
    initial: KinkState,
    schedule: RampSchedule,
    times: Sequence[float],
    engine: str = "eigen",
    dt: Optional[float] = None,
    guard: int = 20,
    on_status: Optional[Callable[[str], None]] = None,
    cache: EigenCache = EIGEN_CACHE,
) -> ProbabilityTrace:
    """
    Release the kink from the wells of spec according to schedule and record
    p_n at each requested time (measured from the start of the ramp).

    After the ramp the evolution is free hopping, done exactly from the
    end-of-ramp state by the eigenbasis ("eigen") or the Bessel kernel
    ("bessel", effectively-infinite lattices only).
    """
    if engine not in ("eigen", "bessel"):
        raise ConfigError(f"unknown engine {engine!r}", engine=engine)
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size == 0 or times[0] < 0.0 or (times.size > 1 and np.any(np.diff(times) <= 0.0)):
        raise ConfigError("output times must be non-negative and strictly increasing")
    if initial.n_links != spec.n_links:
        raise ConfigError("state and lattice sizes differ", state=initial.n_links, lattice=spec.n_links)
    initial.check_norm(RUN_NORM_TOL, step="release-initial")
    if not spec.tight_binding_valid:
        log.warning("one-kink model outside its regime: g^2=%.3g, max w=%.3g", spec.g ** 2, spec.max_well)

    status = on_status or (lambda _msg: None)
    free = spec.released()
    step = 0.01 / spec.g if dt is None else float(dt)
    T = 0.0 if schedule.is_sudden else schedule.duration

    recorder = TraceRecorder(
        metadata={
            "n_sites": spec.n_sites,
            "g": spec.g,
            "wells": ";".join(f"{n}:{w!r}" for n, w in spec.wells),
            "boundary": spec.boundary.value,
            "ramp": schedule.kind.value,
            "ramp_duration": T,
            "engine": engine,
            "dt": step,
        }
    )
    _, free_off = hamiltonian_bands(free)
    well_diag, _ = hamiltonian_bands(spec)

    def potential(tau: float) -> np.ndarray:
        return well_diag * schedule.multiplier(tau)

    sw = Stopwatch()
    psi = np.array(initial.amplitudes, dtype=complex)
    clock = 0.0
    released: Optional[KinkState] = None
    for i, t in enumerate(times):
        if t < T:
            psi = _split_step(psi, free_off, potential, clock, t, step, cache)
            clock = t
            out = KinkState(psi, t)
        else:
            if released is None:
                if T > 0.0:
                    psi = _split_step(psi, free_off, potential, clock, T, step, cache)
                released = KinkState(psi, T)
            if engine == "bessel":
                out = bessel_free_propagate(released, free, t - T, guard=guard)
            else:
                out = _evolve_bands(released, np.zeros(spec.n_links), free_off, t - T, cache)
        out = out.at(out.amplitudes, t)
        out.check_norm(RUN_NORM_TOL, step="run_release")
        p = out.probabilities()
        check_edge_contact(p, free, t, guard=guard)
        recorder.push(t, p)
        status(f"release t={t:g} ({i + 1}/{times.size})")

    log.info("release run: %d outputs on %d links in %.2fs", times.size, spec.n_links, sw.elapsed())
    return recorder.snapshot()


# internal usage


def _evolve_bands(
    state: KinkState,
    diag: np.ndarray,
    off: np.ndarray,
    dt: float,
    cache: EigenCache = EIGEN_CACHE,
) -> KinkState:
    if len(diag) != state.n_links:
        raise ConfigError("state and Hamiltonian sizes differ", state=state.n_links, hamiltonian=len(diag))
    dt = float(dt)
    if dt == 0.0:
        return state.at(state.amplitudes.copy(), state.time)
    es = cache.get(diag, off)
    psi = es.evolve(np.asarray(state.amplitudes, dtype=complex), dt)
    return state.at(psi, state.time + dt).check_norm(STEP_NORM_TOL, step="eigen_propagate")


def _bessel_convolve(psi: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    dmax = (kernel.shape[0] - 1) // 2
    full = np.convolve(psi, kernel)
    return full[dmax:dmax + psi.shape[0]]


def _split_step(
    psi: np.ndarray,
    free_off: np.ndarray,
    potential: Callable[[float], np.ndarray],
    t0: float,
    t1: float,
    dt: float,
    cache: EigenCache = EIGEN_CACHE,
) -> np.ndarray:
    """
    Second-order split step from t0 to t1: half kinetic step in the free
    eigenbasis, diagonal well phase at the midpoint time, half kinetic step.
    The interval is cut into equal steps no longer than dt.
    """
    span = float(t1) - float(t0)
    if span <= 0.0:
        return np.asarray(psi, dtype=complex)
    n = max(1, int(math.ceil(span / dt - 1e-9)))
    h = span / n
    m = len(psi)
    half = cache.propagator(np.zeros(m), free_off, 0.5 * h)
    psi = np.asarray(psi, dtype=complex)
    for k in range(n):
        mid = t0 + (k + 0.5) * h
        psi = half @ psi
        psi = np.exp(-1j * potential(mid) * h) * psi
        psi = half @ psi
    drift = abs(np.linalg.norm(psi) - 1.0)
    if drift > RUN_NORM_TOL:
        raise InvariantViolation(
            f"split-step norm drift {drift:.3e}", module="unitary-dynamics", step="split-step", time=float(t1)
        )
    return psi
