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

from dataclasses import dataclass, field
from threading import Lock
from typing import Any, Dict, List, Mapping, Optional

import numpy as np

from kinkscope.utils.errors import InvariantViolation

SUM_TOL = 1e-8


@dataclass(frozen=True)
class TraceFrame:
    seq: int
    time: float
    distribution: np.ndarray


@dataclass(frozen=True)
class ProbabilityTrace:
    """
    Site-resolved kink distributions p_n(t) plus run metadata
    (lattice spec, scenario parameters, integrator settings, seed).
    """

    times: np.ndarray
    distributions: np.ndarray
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float).reshape(-1)
        p = np.asarray(self.distributions, dtype=float)
        if p.ndim == 1:
            p = p.reshape(1, -1)
        if p.shape[0] != t.shape[0]:
            raise ValueError(f"{t.shape[0]} times but {p.shape[0]} distributions")
        if t.size > 1 and not np.all(np.diff(t) > 0.0):
            raise InvariantViolation("trace times must be strictly increasing", module="kink-core", step="trace")
        sums = p.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > SUM_TOL)
        if bad.size:
            i = int(bad[0])
            raise InvariantViolation(
                f"distribution at t={t[i]:g} sums to {sums[i]:.12f}",
                module="kink-core", step="trace", time=float(t[i]),
            )
        t.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "distributions", p)
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def n_links(self) -> int:
        return int(self.distributions.shape[1])

    @property
    def final(self) -> np.ndarray:
        return self.distributions[-1]

    def at_time(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - float(t))))
        return self.distributions[i]


class TraceRecorder:
    """
    Collects distributions as an engine produces them; snapshot() freezes
    them into a ProbabilityTrace. Pushes may come from worker threads.
    """

    def __init__(self, metadata: Optional[Mapping[str, Any]] = None) -> None:
        self._lock = Lock()
        self._frames: List[TraceFrame] = []
        self._seq = 0
        self._metadata: Dict[str, Any] = dict(metadata or {})

    def update_metadata(self, **extra: Any) -> None:
        with self._lock:
            self._metadata.update(extra)

    def push(self, time: float, distribution: np.ndarray, renormalize: bool = False) -> None:
        p = np.array(distribution, dtype=float, copy=True)
        if renormalize:
            s = p.sum()
            if s > 0.0:
                p /= s
        with self._lock:
            self._seq += 1
            self._frames.append(TraceFrame(seq=self._seq, time=float(time), distribution=p))

    def __len__(self) -> int:
        with self._lock:
            return len(self._frames)

    def snapshot(self) -> ProbabilityTrace:
        with self._lock:
            frames = sorted(self._frames, key=lambda f: (f.time, f.seq))
            md = dict(self._metadata)
        if not frames:
            raise ValueError("no frames recorded")
        times = np.array([f.time for f in frames])
        dists = np.vstack([f.distribution for f in frames])
        return ProbabilityTrace(times=times, distributions=dists, metadata=md)
