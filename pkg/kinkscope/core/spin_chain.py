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
from typing import Callable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import eigsh, expm_multiply

from kinkscope.core.analysis import decay_rate
from kinkscope.core.trace_buffer import ProbabilityTrace, TraceRecorder
from kinkscope.core.trajectories import Segment, TrajectoryPool, UnravelingPlan
from kinkscope.utils.errors import ConfigError, InvariantViolation
from kinkscope.utils.timebase import Stopwatch

log = logging.getLogger(__name__)

MAX_PURE_SPINS = 14
MAX_DENSE_SPINS = 7
MAX_TRAJECTORY_SPINS = 12
DENSE_EIGH_SPINS = 10
NORM_TOL = 1e-9
KINK_TOLERANCE = 0.05
JUMP_STEP_BOUND = 0.02


@dataclass(frozen=True)
class SpinChainSpec:
    """
    Open chain H = -sum_n g sx_n - sum_n J_n sz_n sz_{n+1} - h_L sz_1 + h_R sz_N.
    Spin 0 is the most significant bit of the basis index; bit 0 means up.
    """

    n_spins: int
    g: float
    bond_couplings: Tuple[float, ...] = ()
    boundary_pinning: Tuple[float, float] = (2.0, 2.0)

    def __post_init__(self) -> None:
        n = int(self.n_spins)
        if not 2 <= n <= MAX_PURE_SPINS:
            raise ConfigError(f"n_spins must be in [2, {MAX_PURE_SPINS}]", n_spins=n)
        if float(self.g) < 0.0:
            raise ConfigError("g must be >= 0", g=self.g)
        couplings = tuple(float(j) for j in self.bond_couplings) or (1.0,) * (n - 1)
        if len(couplings) != n - 1:
            raise ConfigError(f"expected {n - 1} bond couplings, got {len(couplings)}")
        pin = tuple(float(h) for h in self.boundary_pinning)
        if len(pin) != 2 or min(pin) < 0.0:
            raise ConfigError("boundary pinning must be two fields >= 0", boundary_pinning=pin)
        object.__setattr__(self, "n_spins", n)
        object.__setattr__(self, "g", float(self.g))
        object.__setattr__(self, "bond_couplings", couplings)
        object.__setattr__(self, "boundary_pinning", pin)

    @property
    def dim(self) -> int:
        return 1 << self.n_spins

    @property
    def n_links(self) -> int:
        return self.n_spins - 1

    @classmethod
    def with_weak_links(
        cls, n_spins: int, g: float, wells: Mapping[int, float], pinning: float = 2.0
    ) -> "SpinChainSpec":
        couplings = [1.0] * (int(n_spins) - 1)
        for n, w in wells.items():
            if not 0 <= int(n) < len(couplings):
                raise ConfigError(f"weak link {n} out of range", link=n)
            couplings[int(n)] = 1.0 - float(w)
        return cls(n_spins=n_spins, g=g, bond_couplings=tuple(couplings), boundary_pinning=(pinning, pinning))


@dataclass(frozen=True)
class GhzDecay:
    times: np.ndarray
    coherence: np.ndarray
    fitted_rate: float
    expected_rate: float


# public API


def z_signs(n_spins: int) -> np.ndarray:
    """(n_spins, 2^n) table of sz eigenvalues."""
    s = np.arange(1 << n_spins)
    shifts = n_spins - 1 - np.arange(n_spins)
    return (1 - 2 * ((s[None, :] >> shifts[:, None]) & 1)).astype(np.int8)


def bond_observables(n_spins: int) -> np.ndarray:
    """(n_spins - 1, 2^n): (1 - sz_n sz_{n+1})/2, the kink indicator on each bond."""
    z = z_signs(n_spins).astype(float)
    return 0.5 * (1.0 - z[:-1] * z[1:])


def kink_configuration(n_spins: int, link: int) -> int:
    """Basis index with spins 0..link up and the rest down."""
    if not 0 <= int(link) <= n_spins - 2:
        raise ConfigError(f"kink link {link} out of range", link=link)
    return (1 << (n_spins - 1 - int(link))) - 1


def kink_start(spec: SpinChainSpec, link: int, dressed: bool = False) -> np.ndarray:
    """
    Basis configuration with the kink on link, or with dressed=True its
    projection onto the one-kink band (the N-1 lowest eigenstates), which
    carries the virtual pair admixture of the dressed kink.
    """
    psi = np.zeros(spec.dim, dtype=complex)
    psi[kink_configuration(spec.n_spins, link)] = 1.0
    if not dressed:
        return psi

    k = spec.n_links
    h = build_spin_hamiltonian(spec)
    if spec.n_spins <= DENSE_EIGH_SPINS:
        evals, evecs = np.linalg.eigh(h.toarray())
    else:
        evals, evecs = eigsh(h, k=k + 1, which="SA")
        order = np.argsort(evals)
        evals, evecs = evals[order], evecs[:, order]
    gap = float(evals[k] - evals[k - 1])
    if gap < 4.0 * spec.g:
        log.warning("one-kink band not separated: gap %.3g below 4g = %.3g", gap, 4.0 * spec.g)
    band = evecs[:, :k]
    psi = band @ (band.conj().T @ psi)
    weight = float(np.linalg.norm(psi))
    if weight < 0.5:
        raise InvariantViolation(
            f"kink configuration has weight {weight:.3g} in the one-kink band",
            module="spin-chain-oracle", step="dress", link=int(link),
        )
    return psi / weight


def build_spin_hamiltonian(spec: SpinChainSpec) -> sparse.csr_matrix:
    n = spec.n_spins
    z = z_signs(n).astype(float)
    diag = np.zeros(spec.dim)
    for b, j in enumerate(spec.bond_couplings):
        diag -= j * z[b] * z[b + 1]
    h_left, h_right = spec.boundary_pinning
    diag += -h_left * z[0] + h_right * z[-1]

    h = sparse.diags(diag, format="csr")
    if spec.g > 0.0:
        s = np.arange(spec.dim)
        rows = np.concatenate([s for _ in range(n)])
        cols = np.concatenate([s ^ (1 << (n - 1 - j)) for j in range(n)])
        vals = np.full(rows.size, -spec.g)
        h = h + sparse.csr_matrix((vals, (rows, cols)), shape=(spec.dim, spec.dim))
    return h.tocsr()


def kink_distribution(prob: np.ndarray, bonds: np.ndarray) -> Tuple[np.ndarray, float]:
    """Per-bond kink weights renormalized by the expected kink number."""
    raw = bonds @ prob
    total = float(raw.sum())
    if not total > 0.0:
        raise InvariantViolation("no kink present in the chain", module="spin-chain-oracle", step="observable")
    return raw / total, total


def full_evolve_pure(
    spec: SpinChainSpec,
    initial_link: int,
    times: Sequence[float],
    kink_tolerance: float = KINK_TOLERANCE,
    dressed: bool = False,
    on_status: Optional[Callable[[str], None]] = None,
) -> ProbabilityTrace:
    """
    Schrodinger evolution of a single-kink start (see kink_start) in the
    full 2^N space. Dense diagonalization up to 10 spins, sparse Krylov
    exponentials beyond.
    """
    times = _check_times(times)
    status = on_status or (lambda _msg: None)
    h = build_spin_hamiltonian(spec)
    bonds = bond_observables(spec.n_spins)
    psi0 = kink_start(spec, initial_link, dressed)
    e0 = float(np.real(np.vdot(psi0, h @ psi0)))

    recorder = TraceRecorder(
        metadata={"n_spins": spec.n_spins, "g": spec.g, "initial_link": int(initial_link), "dressed": bool(dressed)}
    )
    sw = Stopwatch()
    worst_kinks = 0.0
    worst_energy = 0.0

    dense = spec.n_spins <= DENSE_EIGH_SPINS
    if dense:
        evals, evecs = np.linalg.eigh(h.toarray())
        c0 = evecs.conj().T @ psi0
    psi = psi0
    clock = 0.0
    for t in times:
        if dense:
            psi = evecs @ (np.exp(-1j * evals * t) * c0)
        elif t > clock:
            psi = expm_multiply(-1j * (t - clock) * h, psi)
        clock = t

        drift = abs(np.linalg.norm(psi) - 1.0)
        if drift > NORM_TOL:
            raise InvariantViolation(f"norm drift {drift:.3e}", module="spin-chain-oracle", step="pure", time=t)
        energy = float(np.real(np.vdot(psi, h @ psi)))
        worst_energy = max(worst_energy, abs(energy - e0))
        p, kinks = kink_distribution(np.abs(psi) ** 2, bonds)
        worst_kinks = max(worst_kinks, kinks)
        recorder.push(t, p)
        status(f"spin chain t={t:g}")

    if worst_kinks > 1.0 + kink_tolerance:
        log.warning(
            "kink number reached %.4f (> 1 + %.3g); one-kink picture breaking down", worst_kinks, kink_tolerance
        )
    recorder.update_metadata(
        max_kink_number=worst_kinks,
        energy_drift=worst_energy,
        energy=e0,
        method="dense" if dense else "krylov",
    )
    log.info("pure spin chain N=%d: %d outputs in %.2fs", spec.n_spins, len(times), sw.elapsed())
    return recorder.snapshot()


def full_evolve_dephasing(
    spec: SpinChainSpec,
    initial_link: int,
    gamma: float,
    times: Sequence[float],
    seed: int = 0,
    method: str = "auto",
    n_trajectories: int = 2000,
    dt: Optional[float] = None,
    workers: Optional[int] = None,
    batch_size: int = 50,
    max_stderr: Optional[float] = None,
    dressed: bool = False,
    on_status: Optional[Callable[[str], None]] = None,
) -> ProbabilityTrace:
    """
    Local sz dephasing at rate gamma per spin. Both paths use the same
    first-order split (exact unitary step, then the exact dephasing channel
    for that step), so the trajectory mean estimates the dense result without
    bias. For trajectories the metadata carries the per-point standard error.
    """
    times = _check_times(times)
    gamma = float(gamma)
    if gamma < 0.0:
        raise ConfigError("gamma must be >= 0", gamma=gamma)
    if method == "auto":
        method = "dense" if spec.n_spins <= MAX_DENSE_SPINS else "trajectories"
    if method == "dense" and spec.n_spins > MAX_DENSE_SPINS:
        raise ConfigError(f"dense density-matrix path limited to {MAX_DENSE_SPINS} spins", n_spins=spec.n_spins)
    if method == "trajectories" and spec.n_spins > MAX_TRAJECTORY_SPINS:
        raise ConfigError(f"trajectory path limited to {MAX_TRAJECTORY_SPINS} spins", n_spins=spec.n_spins)
    if method not in ("dense", "trajectories"):
        raise ConfigError(f"unknown method {method!r}", method=method)

    step = _jump_step(spec, gamma, times, dt)
    plan = _segments(spec, gamma, times, step)
    bonds = bond_observables(spec.n_spins)
    psi0 = kink_start(spec, initial_link, dressed)
    meta = {
        "n_spins": spec.n_spins, "g": spec.g, "gamma": gamma, "dt": step,
        "method": method, "seed": int(seed), "initial_link": int(initial_link), "dressed": bool(dressed),
    }

    if method == "dense":
        probs = _dense_dephasing(np.outer(psi0, psi0.conj()), plan, z_signs(spec.n_spins), gamma)
        recorder = TraceRecorder(metadata=meta)
        for t, prob in zip(times, probs):
            p, _ = kink_distribution(prob, bonds)
            recorder.push(t, p)
        return recorder.snapshot()

    unravel = UnravelingPlan(
        psi0=psi0,
        segments=tuple(Segment(n, u, _jump_probability(gamma, h)) for n, h, u in plan),
        z_signs=z_signs(spec.n_spins).astype(float),
        observables=bonds,
    )
    pool = TrajectoryPool(workers=workers, batch_size=batch_size, on_status=on_status)
    result = pool.run(unravel, n_trajectories, seed, max_stderr=max_stderr)
    totals = result.mean.sum(axis=1, keepdims=True)
    meta.update(n_trajectories=result.n_trajectories, stderr=result.stderr / totals)
    return ProbabilityTrace(times=times, distributions=result.mean / totals, metadata=meta)


def ghz_decoherence_demo(
    n_spins: int,
    gamma: float,
    times: Optional[Sequence[float]] = None,
) -> GhzDecay:
    """
    (|up..up> + |down..down>)/sqrt2 under pure dephasing with g = 0. The
    coherence 2|rho[up..up, down..down]| decays as exp(-gamma N t).
    """
    n = int(n_spins)
    if not 1 <= n <= MAX_DENSE_SPINS:
        raise ConfigError(f"GHZ demo uses the dense path; n_spins must be in [1, {MAX_DENSE_SPINS}]", n_spins=n)
    gamma = float(gamma)
    if gamma < 0.0:
        raise ConfigError("gamma must be >= 0", gamma=gamma)
    if times is None:
        horizon = 3.0 / (gamma * n) if gamma > 0.0 else 1.0
        times = np.linspace(0.0, horizon, 31)
    times = _check_times(times)

    dim = 1 << n
    psi = np.zeros(dim, dtype=complex)
    psi[0] = psi[-1] = 1.0 / math.sqrt(2.0)
    rho = np.outer(psi, psi.conj())
    # g = 0: the unitary is diagonal and only rotates the coherence phase
    ident = np.eye(dim, dtype=complex)
    plan = [(0 if i == 0 and t == 0.0 else 1, t - (times[i - 1] if i else 0.0), ident) for i, t in enumerate(times)]
    coherence = 2.0 * np.array([abs(r[0, -1]) for r in _dense_dephasing(rho, plan, z_signs(n), gamma, full=True)])

    return GhzDecay(times=times, coherence=coherence, fitted_rate=decay_rate(times, coherence), expected_rate=gamma * n)


# internal usage


def _check_times(times: Sequence[float]) -> np.ndarray:
    t = np.asarray(times, dtype=float).reshape(-1)
    if t.size == 0 or t[0] < 0.0 or (t.size > 1 and np.any(np.diff(t) <= 0.0)):
        raise ConfigError("output times must be non-negative and strictly increasing")
    return t


def _jump_probability(gamma: float, h: float) -> float:
    # sz applied with probability p damps coherences by 1 - 2p = exp(-gamma h)
    return 0.5 * (1.0 - math.exp(-gamma * h))


def _jump_step(spec: SpinChainSpec, gamma: float, times: np.ndarray, dt: Optional[float]) -> float:
    bound = JUMP_STEP_BOUND / (gamma * spec.n_spins) if gamma > 0.0 else math.inf
    if dt is None:
        return bound if math.isfinite(bound) else max(float(times[-1]), 1.0)
    dt = float(dt)
    if not dt > 0.0:
        raise ConfigError("dt must be > 0", dt=dt)
    if dt > bound * (1.0 + 1e-12):
        raise ConfigError(
            f"dt*gamma*N = {dt * gamma * spec.n_spins:.3g} exceeds {JUMP_STEP_BOUND}",
            dt=dt, gamma=gamma, n_spins=spec.n_spins,
        )
    return dt


def _segments(spec: SpinChainSpec, gamma: float, times: np.ndarray, dt: float) -> List[Tuple[int, float, np.ndarray]]:
    """(n_steps, step, U(step)) per output interval; intervals are cut into equal steps <= dt."""
    evals, evecs = np.linalg.eigh(build_spin_hamiltonian(spec).toarray())
    cache = {}
    out = []
    clock = 0.0
    for t in times:
        span = t - clock
        if span <= 0.0:
            out.append((0, 0.0, np.eye(spec.dim, dtype=complex)))
            continue
        n = max(1, int(math.ceil(span / dt - 1e-9)))
        h = span / n
        u = cache.get(h)
        if u is None:
            u = (evecs * np.exp(-1j * evals * h)) @ evecs.conj().T
            cache[h] = u
        out.append((n, h, u))
        clock = t
    return out


def _dense_dephasing(rho: np.ndarray, plan, signs: np.ndarray, gamma: float, full: bool = False) -> list:
    """
    Steps rho through the plan; returns the diagonal (or the full matrix when
    full=True) at each output.
    """
    z = signs.astype(float)
    n_spins = z.shape[0]
    # Hamming distance between basis states a and b
    hamming = 0.5 * (n_spins - z.T @ z)
    rho = np.array(rho, dtype=complex)
    decay_cache = {}
    out = []
    for n, h, u in plan:
        if n:
            decay = decay_cache.get(h)
            if decay is None:
                decay = np.exp(-gamma * h * hamming)
                decay_cache[h] = decay
            uh = u.conj().T
            for _ in range(n):
                rho = u @ rho @ uh
                rho *= decay
            rho = 0.5 * (rho + rho.conj().T)
        tr = float(np.real(np.trace(rho)))
        if abs(tr - 1.0) > NORM_TOL:
            raise InvariantViolation(f"trace drift {abs(tr - 1.0):.3e}", module="spin-chain-oracle", step="dense")
        out.append(rho.copy() if full else np.real(np.diag(rho)).copy())
    return out
