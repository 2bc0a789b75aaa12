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
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from kinkscope.utils.errors import ConfigError, EdgeContactError, InvariantViolation

log = logging.getLogger(__name__)

NORM_TOL = 1e-12
RHO_TOL = 1e-10


class Boundary(str, enum.Enum):
    HARD_WALL = "hard-wall"
    EFFECTIVELY_INFINITE = "effectively-infinite"


@dataclass(frozen=True)
class LatticeSpec:
    """
    One-kink lattice. Link n sits between spins n and n+1 (0-based), so the
    kink basis has n_sites - 1 states. wells maps link -> w; Ising bond n has
    coupling 1 - w and the kink sees a potential -2w there.
    """

    n_sites: int
    g: float
    wells: Tuple[Tuple[int, float], ...] = ()
    boundary: Boundary = Boundary.HARD_WALL
    tight_binding_threshold: float = 0.1

    def __post_init__(self) -> None:
        if int(self.n_sites) < 2:
            raise ConfigError("n_sites must be >= 2", n_sites=self.n_sites)
        if not float(self.g) > 0.0:
            raise ConfigError("hopping g must be > 0", g=self.g)

        # accept a mapping too; store a sorted tuple so the spec stays hashable
        raw = self.wells.items() if isinstance(self.wells, Mapping) else self.wells
        wells = tuple(sorted((int(n), float(w)) for n, w in raw))
        seen = set()
        for n, w in wells:
            if n in seen:
                raise ConfigError(f"duplicate well at link {n}", link=n)
            seen.add(n)
            if not 0 <= n <= int(self.n_sites) - 2:
                raise ConfigError(f"well link {n} out of range [0, {int(self.n_sites) - 2}]", link=n)
            if w < 0.0:
                raise ConfigError(f"well strength must be >= 0 (link {n}: {w})", link=n, w=w)

        object.__setattr__(self, "n_sites", int(self.n_sites))
        object.__setattr__(self, "g", float(self.g))
        object.__setattr__(self, "wells", wells)
        object.__setattr__(self, "boundary", Boundary(self.boundary))

    @property
    def n_links(self) -> int:
        return self.n_sites - 1

    @property
    def well_map(self) -> Dict[int, float]:
        return dict(self.wells)

    @property
    def active_wells(self) -> Tuple[Tuple[int, float], ...]:
        return tuple((n, w) for n, w in self.wells if w > 0.0)

    @property
    def max_well(self) -> float:
        return max((w for _, w in self.wells), default=0.0)

    @property
    def tight_binding_valid(self) -> bool:
        # g^2 << 1 - w keeps the 3, 5, ... kink sectors out of reach
        return self.g ** 2 < self.tight_binding_threshold * (1.0 - self.max_well)

    def with_wells(self, wells: Mapping[int, float]) -> "LatticeSpec":
        return replace(self, wells=tuple(wells.items()))

    def released(self) -> "LatticeSpec":
        return replace(self, wells=())

    @classmethod
    def centered(
        cls,
        n_links: int,
        g: float,
        w: float,
        separation: Optional[int] = None,
        boundary: Boundary = Boundary.HARD_WALL,
    ) -> "LatticeSpec":
        """
        Lattice with one well on the central link, or two equal wells
        placed symmetrically about the center when separation is given.
        """
        n_links = int(n_links)
        if separation is None:
            wells = {(n_links - 1) // 2: w}
        else:
            L = int(separation)
            if L < 1 or L > n_links - 1:
                raise ConfigError("well separation out of range", separation=L, n_links=n_links)
            n0 = (n_links - 1 - L) // 2
            wells = {n0: w, n0 + L: w}
        return cls(n_sites=n_links + 1, g=g, wells=tuple(wells.items()), boundary=boundary)


@dataclass(frozen=True)
class KinkState:
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.ndim != 1:
            raise ValueError("amplitudes must be a vector")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "time", float(self.time))

    @property
    def n_links(self) -> int:
        return int(self.amplitudes.shape[0])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def at(self, amplitudes: np.ndarray, time: float) -> "KinkState":
        return KinkState(amplitudes=amplitudes, time=time)

    def check_norm(self, tol: float = NORM_TOL, step: str = "propagation") -> "KinkState":
        drift = abs(self.norm - 1.0)
        if drift > tol:
            raise InvariantViolation(
                f"norm drift {drift:.3e} exceeds {tol:.1e}",
                module="kink-core", step=step, time=self.time,
            )
        return self

    @classmethod
    def localized(cls, n_links: int, link: int, time: float = 0.0) -> "KinkState":
        a = np.zeros(int(n_links), dtype=complex)
        a[int(link)] = 1.0
        return cls(amplitudes=a, time=time)


@dataclass(frozen=True)
class KinkDensityMatrix:
    entries: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        rho = np.asarray(self.entries, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError("density matrix must be square")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def from_state(cls, state: KinkState) -> "KinkDensityMatrix":
        psi = state.amplitudes
        return cls(entries=np.outer(psi, psi.conj()), time=state.time)

    @property
    def n_links(self) -> int:
        return int(self.entries.shape[0])

    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.entries)).copy()

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def trace_error(self) -> float:
        return float(abs(np.trace(self.entries) - 1.0))

    def validate(self, tol: float = RHO_TOL, diag_floor: float = -RHO_TOL, step: str = "check") -> "KinkDensityMatrix":
        herm = self.hermiticity_error()
        if herm > tol:
            raise InvariantViolation(f"rho not Hermitian ({herm:.3e})", module="open-dynamics", step=step, time=self.time)
        tr = self.trace_error()
        if tr > tol:
            raise InvariantViolation(f"trace drift {tr:.3e}", module="open-dynamics", step=step, time=self.time)
        d = np.diag(self.entries)
        if np.max(np.abs(d.imag)) > tol:
            raise InvariantViolation("complex diagonal entry", module="open-dynamics", step=step, time=self.time)
        low = float(np.min(d.real))
        if low < diag_floor:
            raise InvariantViolation(
                f"negative population {low:.3e}", module="open-dynamics", step=step, time=self.time,
            )
        return self


def hamiltonian_bands(spec: LatticeSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    (diagonal, off-diagonal) of the one-kink Hamiltonian. The uniform Ising
    offset is dropped; only the well depths -2w survive on the diagonal.
    """
    m = spec.n_links
    diag = np.zeros(m, dtype=float)
    for n, w in spec.wells:
        diag[n] = -2.0 * w
    off = np.full(m - 1, -spec.g, dtype=float)
    return diag, off


def build_hamiltonian(spec: LatticeSpec) -> np.ndarray:
    diag, off = hamiltonian_bands(spec)
    # hard wall is plain truncation at the first/last link
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def tridiagonal_bands(h: np.ndarray, tol: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Extract and verify the bands of a real symmetric tridiagonal matrix.
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("Hamiltonian must be square")
    if np.iscomplexobj(h) and np.max(np.abs(h.imag), initial=0.0) > tol:
        raise ValueError("Hamiltonian must be real")
    h = np.real(h)
    if np.max(np.abs(h - h.T), initial=0.0) > tol:
        raise ValueError("Hamiltonian must be symmetric")
    if h.shape[0] > 2 and np.max(np.abs(np.triu(h, 2)), initial=0.0) > tol:
        raise ValueError("Hamiltonian must be tridiagonal")
    return np.diag(h).copy(), np.diag(h, 1).copy()


def l1_distance(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"distribution length mismatch: {p.shape} vs {q.shape}")
    return float(np.sum(np.abs(p - q)))


def normalize(v) -> np.ndarray:
    """
    Unit 2-norm copy of v. The global phase is left untouched.
    """
    v = np.asarray(v, dtype=complex)
    nrm = np.linalg.norm(v)
    if not nrm > 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / nrm


def exponential_profile(n_links: int, center: int, gamma: float) -> np.ndarray:
    n = np.arange(int(n_links))
    return np.exp(-float(gamma) * np.abs(n - int(center)))


def guard_mass(p: np.ndarray, guard: int) -> float:
    guard = max(1, int(guard))
    return float(np.sum(p[:guard]) + np.sum(p[-guard:]))


def check_edge_contact(
    p: np.ndarray,
    spec: LatticeSpec,
    time: float,
    guard: int = 20,
    threshold: float = 1e-10,
) -> None:
    """
    On effectively-infinite lattices no appreciable probability may reach the
    guard band at either end.
    """
    if spec.boundary is not Boundary.EFFECTIVELY_INFINITE:
        return
    mass = guard_mass(np.asarray(p), guard)
    if mass >= threshold:
        raise EdgeContactError(
            f"probability {mass:.3e} in the {guard}-link guard band at t={time:g}",
            module="kink-core", step="edge-check", time=time, n_links=spec.n_links,
        )


def ballistic_links(g: float, t_end: float, separation: int = 0, guard: int = 20) -> int:
    """
    Links needed so a packet spreading at the maximal group velocity 2g from
    both wells stays clear of the edges until t_end. The Airy-shaped front
    leaks past 2gt by a few (gt)^(1/3) links, hence the front margin.
    """
    gt = float(g) * float(t_end)
    reach = int(np.ceil(4.0 * gt))
    front = int(np.ceil(8.0 * np.cbrt(max(gt, 1.0)))) + 10
    m = reach + int(separation) + 2 * (int(guard) + front) + 1
    return m + (1 - m % 2) if separation % 2 == 0 else m + (m % 2)
