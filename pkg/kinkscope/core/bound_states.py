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
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import bisect

from kinkscope.core.eigencache import lowest_states
from kinkscope.core.lattice import (
    Boundary,
    LatticeSpec,
    exponential_profile,
    hamiltonian_bands,
    normalize,
)
from kinkscope.utils.errors import ConfigError, RootFindingError

log = logging.getLogger(__name__)

ROOT_RESIDUAL = 1e-12
# scipy rejects rtol below 4 eps
BISECT_RTOL = 4.0 * np.finfo(float).eps


@dataclass(frozen=True)
class SingleWellState:
    gamma0: float
    energy: float
    vector: np.ndarray


@dataclass(frozen=True)
class BoundStateSolution:
    """
    Double-well bound states. gamma_minus (and everything derived from it)
    is None when the antisymmetric state is not bound.
    """

    gamma_plus: float
    gamma_minus: Optional[float]
    energy_plus: float
    energy_minus: Optional[float]
    gap: Optional[float]
    psi_plus: np.ndarray
    psi_minus: Optional[np.ndarray]
    exact_energies: np.ndarray
    exact_plus: np.ndarray
    exact_minus: np.ndarray
    overlap_plus: float
    overlap_minus: Optional[float]
    n0: int
    separation: int


def inverse_decay_length(w: float, g: float) -> float:
    if not g > 0.0:
        raise ValueError(f"g must be > 0 (got {g})")
    if w < 0.0:
        raise ValueError(f"w must be >= 0 (got {w})")
    x = w / g
    # asinh(x) = ln(x + sqrt(1 + x^2))
    return float(np.arcsinh(x))


def bound_energy(gamma: float, g: float) -> float:
    return -2.0 * g * math.cosh(gamma)


def normalization_prefactor(gamma0: float) -> float:
    """
    Amplitude at the well of the unit-norm profile e^{-gamma0 |n - n0|} on
    the infinite lattice: sum_n e^{-2 gamma |n|} = coth(gamma).
    """
    return math.sqrt(math.tanh(gamma0))


def effective_half_width(gamma0: float, separation: int = 0) -> int:
    """
    Links from the midpoint of the wells to each edge; the exponential
    tails are truncated at e^{-80} or below.
    """
    if not gamma0 > 0.0:
        raise ValueError("gamma0 must be > 0 for a bound state")
    return int(math.ceil(max(40.0 / gamma0, separation + 40.0 / gamma0)))


def bound_state_lattice(w: float, g: float, separation: Optional[int] = None) -> LatticeSpec:
    """
    Effectively-infinite lattice centered on one well, or on the midpoint of
    two equal wells.
    """
    gamma0 = inverse_decay_length(w, g)
    L = 0 if separation is None else int(separation)
    half = effective_half_width(gamma0, L)
    n_links = 2 * half + 1 + (L % 2)
    return LatticeSpec.centered(
        n_links, g, w, separation=separation, boundary=Boundary.EFFECTIVELY_INFINITE
    )


def well_pair(spec: LatticeSpec) -> Tuple[int, int, float]:
    wells = spec.active_wells
    if len(wells) != 2:
        raise ConfigError(f"expected exactly two wells, found {len(wells)}", wells=list(wells))
    (n0, w0), (n1, w1) = wells
    if not math.isclose(w0, w1, rel_tol=0.0, abs_tol=1e-15):
        raise ConfigError("wells of unequal depth are not supported", w_left=w0, w_right=w1)
    return n0, n1 - n0, w0


def single_well_bound_state(spec: LatticeSpec) -> SingleWellState:
    wells = spec.active_wells
    if len(wells) != 1:
        raise ConfigError(f"expected exactly one well, found {len(wells)}", wells=list(wells))
    n0, w = wells[0]
    gamma0 = inverse_decay_length(w, spec.g)
    energy = -2.0 * math.sqrt(spec.g ** 2 + w ** 2)
    vec = np.real(normalize(exponential_profile(spec.n_links, n0, gamma0)))
    return SingleWellState(gamma0=gamma0, energy=energy, vector=vec)


def _branch(w: float, g: float, L: int, sign: float):
    # sign > 0: antisymmetric branch, written with expm1 so small gamma stays exact
    ratio = g / w

    def f(gamma: float) -> float:
        if sign > 0:
            return -math.expm1(-gamma * L) - ratio * math.sinh(gamma)
        return 1.0 + math.exp(-gamma * L) - ratio * math.sinh(gamma)

    return f


def _solve(f, lo: float, hi: float, label: str) -> float:
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0.0:
        raise RootFindingError(f"{label}: no sign change on bracket", bracket=(lo, hi), f_lo=flo, f_hi=fhi)
    root = bisect(f, lo, hi, xtol=1e-15, rtol=BISECT_RTOL, maxiter=400)
    res = abs(f(root))
    if res > ROOT_RESIDUAL:
        raise RootFindingError(
            f"{label}: residual {res:.3e} after bisection", bracket=(lo, hi), residual=res
        )
    return float(root)


def double_well_gammas(w: float, g: float, L: int) -> Tuple[float, Optional[float]]:
    """
    Decay exponents of the two double-well bound states.

    Symmetric branch: 1 - (g/w) sinh(gamma) = -e^{-gamma L}, root above gamma0.
    Antisymmetric branch: 1 - (g/w) sinh(gamma) = +e^{-gamma L}; the right side
    minus left side is concave and vanishes at gamma = 0, so a positive root
    exists iff its slope L - g/w there is positive.
    """
    if not (w > 0.0 and g > 0.0):
        raise ValueError("w and g must be > 0")
    L = int(L)
    if L < 1:
        raise ValueError("well separation L must be >= 1")

    gamma0 = inverse_decay_length(w, g)
    gamma_max = math.asinh(2.0 * w / g) + 1.0
    gamma_plus = _solve(_branch(w, g, L, -1.0), gamma0, gamma_max, "symmetric branch")

    if L - g / w <= 0.0:
        log.info("antisymmetric state unbound (w=%g, g=%g, L=%d)", w, g, L)
        return gamma_plus, None

    f_minus = _branch(w, g, L, +1.0)
    lo = gamma0
    for _ in range(200):
        lo *= 0.5
        if f_minus(lo) > 0.0:
            break
    else:
        raise RootFindingError("antisymmetric branch: no positive lower bracket", bracket=(lo, gamma0))
    gamma_minus = _solve(f_minus, lo, gamma0, "antisymmetric branch")
    return gamma_plus, gamma_minus


def tunneling_gap(w: float, g: float, L: int) -> float:
    """
    Leading-order splitting 2*omega = 4 w^2 e^{-gamma0 L} / sqrt(g^2 + w^2)
    of the branch equations. Valid in the tight-binding regime e^{-gamma0 L} << 1.
    """
    if w == 0.0:
        return 0.0
    gamma0 = inverse_decay_length(w, g)
    overlap = math.exp(-gamma0 * int(L))
    if overlap > 0.1:
        log.warning("tunneling_gap outside tight-binding regime: e^(-gamma0 L) = %.3g", overlap)
    return 4.0 * w * w * overlap / math.sqrt(g * g + w * w)


def exact_tunneling_gap(w: float, g: float, L: int) -> Optional[float]:
    """
    -2g (cosh gamma_- - cosh gamma_+) from the branch roots; None when the
    antisymmetric state is unbound.
    """
    gp, gm = double_well_gammas(w, g, L)
    if gm is None:
        return None
    return 2.0 * g * (math.cosh(gp) - math.cosh(gm))


def beat_frequency(w: float, g: float, L: int) -> float:
    gap = exact_tunneling_gap(w, g, L)
    return 0.5 * (gap if gap is not None else tunneling_gap(w, g, L))


def double_well_profile(n_links: int, n0: int, L: int, gamma: float, sign: float) -> np.ndarray:
    n = np.arange(int(n_links))
    return np.exp(-gamma * np.abs(n - n0)) + sign * np.exp(-gamma * np.abs(n - n0 - L))


def _orient(v: np.ndarray, ref: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return -v if float(np.dot(v, ref)) < 0.0 else v


def double_well_bound_states(spec: LatticeSpec) -> BoundStateSolution:
    n0, L, w = well_pair(spec)
    g = spec.g
    gamma0 = inverse_decay_length(w, g)
    gp, gm = double_well_gammas(w, g, L)

    m = spec.n_links
    psi_plus = np.real(normalize(double_well_profile(m, n0, L, gp, +1.0)))
    psi_minus = None if gm is None else np.real(normalize(double_well_profile(m, n0, L, gm, -1.0)))

    diag, off = hamiltonian_bands(spec)
    evals, evecs = lowest_states(diag, off, 2)
    exact_plus = _orient(evecs[:, 0], psi_plus)
    # antisymmetric reference: positive on the left well
    ref_minus = psi_minus if psi_minus is not None else double_well_profile(m, n0, L, gamma0, -1.0)
    exact_minus = _orient(evecs[:, 1], ref_minus)

    overlap_plus = float(abs(np.dot(psi_plus, exact_plus)))
    overlap_minus = None if psi_minus is None else float(abs(np.dot(psi_minus, exact_minus)))
    bound = 1.0 - 5.0 * math.exp(-gamma0 * L)
    for label, ov in (("psi+", overlap_plus), ("psi-", overlap_minus)):
        if ov is not None and ov < bound:
            log.warning("%s overlap with exact eigenvector %.6f below %.6f; lattice too short?", label, ov, bound)

    e_plus = bound_energy(gp, g)
    e_minus = None if gm is None else bound_energy(gm, g)
    return BoundStateSolution(
        gamma_plus=gp,
        gamma_minus=gm,
        energy_plus=e_plus,
        energy_minus=e_minus,
        gap=None if e_minus is None else e_minus - e_plus,
        psi_plus=psi_plus,
        psi_minus=psi_minus,
        exact_energies=np.asarray(evals, dtype=float),
        exact_plus=exact_plus,
        exact_minus=exact_minus,
        overlap_plus=overlap_plus,
        overlap_minus=overlap_minus,
        n0=n0,
        separation=L,
    )


def sign_changes(v: np.ndarray, floor: float = 0.0) -> int:
    """Sign changes along v, skipping entries with |v| <= floor."""
    s = np.sign(np.asarray(v, dtype=float))
    s = s[np.abs(v) > floor]
    return int(np.count_nonzero(s[1:] != s[:-1]))
