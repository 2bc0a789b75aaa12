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

import hashlib
import logging
from collections import OrderedDict
from dataclasses import dataclass
from threading import Lock
from typing import Dict, Tuple

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from kinkscope.utils.errors import InvariantViolation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Eigensystem:
    values: np.ndarray
    vectors: np.ndarray

    def phases(self, dt: float) -> np.ndarray:
        return np.exp(-1j * self.values * float(dt))

    def evolve(self, psi: np.ndarray, dt: float) -> np.ndarray:
        # psi(t+dt) = U exp(-i Lambda dt) U^T psi
        return self.vectors @ (self.phases(dt) * (self.vectors.T @ psi))

    def propagator(self, dt: float) -> np.ndarray:
        return (self.vectors * self.phases(dt)) @ self.vectors.T


def _key(diag: np.ndarray, off: np.ndarray) -> str:
    h = hashlib.sha1()
    h.update(np.ascontiguousarray(diag, dtype=float).tobytes())
    h.update(b"|")
    h.update(np.ascontiguousarray(off, dtype=float).tobytes())
    return h.hexdigest()


def _orthonormalize(vectors: np.ndarray) -> np.ndarray:
    # eigh_tridiagonal vectors are orthogonal only to ~1e-13; Q is orthonormal to rounding
    q, r = np.linalg.qr(vectors)
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return q * signs


class EigenCache:
    """
    Thread-safe cache of tridiagonal eigensystems and dense propagators,
    keyed by the bytes of the bands. Cached arrays are read-only.
    """

    def __init__(self, max_systems: int = 16, max_propagators: int = 32) -> None:
        self._lock = Lock()
        self._systems: "OrderedDict[str, Eigensystem]" = OrderedDict()
        self._props: "OrderedDict[Tuple[str, float], np.ndarray]" = OrderedDict()
        self.max_systems = int(max_systems)
        self.max_propagators = int(max_propagators)

    def get(self, diag: np.ndarray, off: np.ndarray) -> Eigensystem:
        key = _key(diag, off)
        with self._lock:
            es = self._systems.get(key)
            if es is not None:
                self._systems.move_to_end(key)
                return es

        # solve outside the lock; a duplicate solve is harmless
        try:
            if len(diag) == 1:
                values, vectors = np.array(diag, dtype=float), np.ones((1, 1))
            else:
                values, vectors = eigh_tridiagonal(np.asarray(diag, float), np.asarray(off, float))
                vectors = _orthonormalize(vectors)
        except (LinAlgError, ValueError) as e:
            raise InvariantViolation(f"eigensolver failed: {e}", module="kink-core", step="eigh") from e
        values.setflags(write=False)
        vectors.setflags(write=False)
        es = Eigensystem(values=values, vectors=vectors)
        log.debug("eigensystem solved for %d links", len(diag))

        with self._lock:
            self._systems[key] = es
            while len(self._systems) > self.max_systems:
                self._systems.popitem(last=False)
        return es

    def propagator(self, diag: np.ndarray, off: np.ndarray, dt: float) -> np.ndarray:
        key = (_key(diag, off), float(dt))
        with self._lock:
            u = self._props.get(key)
            if u is not None:
                return u
        u = self.get(diag, off).propagator(dt)
        u.setflags(write=False)
        with self._lock:
            self._props[key] = u
            while len(self._props) > self.max_propagators:
                self._props.popitem(last=False)
        return u

    def stats(self) -> Dict[str, int]:
        with self._lock:
            return {"systems": len(self._systems), "propagators": len(self._props)}


def lowest_states(diag: np.ndarray, off: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    k lowest eigenpairs only; cheap on the very long lattices used for
    bound-state and release runs.
    """
    k = int(k)
    try:
        return eigh_tridiagonal(
            np.asarray(diag, float), np.asarray(off, float), select="i", select_range=(0, k - 1)
        )
    except (LinAlgError, ValueError) as e:
        raise InvariantViolation(f"eigensolver failed: {e}", module="kink-core", step="eigh-select") from e


EIGEN_CACHE = EigenCache()
