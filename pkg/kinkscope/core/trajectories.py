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
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from kinkscope.utils.errors import TrajectoryConvergenceError
from kinkscope.utils.timebase import Stopwatch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Segment:
    """n_steps steps of (unitary u, then sigma^z jumps with probability p_jump per spin)."""

    n_steps: int
    u: np.ndarray
    p_jump: float


@dataclass(frozen=True)
class UnravelingPlan:
    psi0: np.ndarray
    segments: Tuple[Segment, ...]
    z_signs: np.ndarray       # (n_spins, dim), entries +-1
    observables: np.ndarray   # (n_obs, dim), diagonal observables

    @property
    def n_outputs(self) -> int:
        return len(self.segments)


@dataclass(frozen=True)
class BatchJob:
    batch_index: int
    first: int
    count: int


@dataclass(frozen=True)
class TrajectoryResult:
    mean: np.ndarray      # (n_outputs, n_obs)
    stderr: np.ndarray    # (n_outputs, n_obs)
    n_trajectories: int


def run_batch(plan: UnravelingPlan, seed: int, job: BatchJob) -> Tuple[np.ndarray, np.ndarray]:
    """
    Evolve trajectories first .. first+count-1 side by side. Trajectory k
    draws from its own generator seeded with seed + k, so the result does not
    depend on how trajectories are batched or scheduled.
    """
    rngs = [np.random.default_rng(int(seed) + k) for k in range(job.first, job.first + job.count)]
    n_spins = plan.z_signs.shape[0]
    psi = np.repeat(np.asarray(plan.psi0, dtype=complex)[:, None], job.count, axis=1)
    s1 = np.zeros((plan.n_outputs, plan.observables.shape[0]))
    s2 = np.zeros_like(s1)

    for i, seg in enumerate(plan.segments):
        for _ in range(seg.n_steps):
            psi = seg.u @ psi
            draws = np.stack([r.random(n_spins) for r in rngs], axis=1)
            flips = draws < seg.p_jump
            for j in np.flatnonzero(flips.any(axis=1)):
                cols = flips[j]
                psi[:, cols] *= plan.z_signs[j][:, None]
        obs = plan.observables @ (np.abs(psi) ** 2)
        s1[i] = obs.sum(axis=1)
        s2[i] = (obs * obs).sum(axis=1)
    return s1, s2


class TrajectoryPool:
    """
    Runs an unraveling plan over a thread pool in fixed-size batches.
    Batch sums are combined in batch order, so the mean is bit-identical
    for any worker count.
    """

    def __init__(
        self,
        workers: Optional[int] = None,
        batch_size: int = 50,
        on_status: Optional[Callable[[str], None]] = None,
        on_error: Optional[Callable[[str, str], None]] = None,
    ) -> None:
        self.workers = int(workers) if workers else min(8, os.cpu_count() or 1)
        self.batch_size = max(1, int(batch_size))
        self._on_status = on_status
        self._on_error = on_error
        self._stop = threading.Event()

    def stop(self) -> None:
        self._stop.set()

    def _status(self, msg: str) -> None:
        if self._on_status is not None:
            self._on_status(msg)
        log.debug(msg)

    def jobs(self, n_trajectories: int) -> List[BatchJob]:
        out: List[BatchJob] = []
        first = 0
        while first < n_trajectories:
            count = min(self.batch_size, n_trajectories - first)
            out.append(BatchJob(batch_index=len(out), first=first, count=count))
            first += count
        return out

    def run(
        self,
        plan: UnravelingPlan,
        n_trajectories: int,
        seed: int,
        max_stderr: Optional[float] = None,
    ) -> TrajectoryResult:
        n = int(n_trajectories)
        if n < 2:
            raise ValueError("need at least two trajectories for a standard error")
        jobs = self.jobs(n)
        self._stop.clear()
        sw = Stopwatch()

        def work(job: BatchJob):
            if self._stop.is_set():
                return None
            return run_batch(plan, seed, job)

        self._status(f"trajectories started: {n} in {len(jobs)} batches, {self.workers} workers")
        try:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                partials = list(pool.map(work, jobs))
        except Exception as e:
            if self._on_error is not None:
                self._on_error("Trajectory Error", str(e))
            raise

        if any(p is None for p in partials):
            raise TrajectoryConvergenceError("trajectory run stopped before completion", completed=sum(p is not None for p in partials))

        s1 = np.zeros_like(partials[0][0])
        s2 = np.zeros_like(partials[0][1])
        for a, b in partials:
            s1 += a
            s2 += b
        mean = s1 / n
        var = np.clip(s2 / n - mean * mean, 0.0, None) * n / (n - 1)
        stderr = np.sqrt(var / n)
        self._status(f"trajectories done in {sw.elapsed():.2f}s, max stderr {float(stderr.max()):.3e}")

        achieved = float(stderr.max())
        if max_stderr is not None and achieved > max_stderr:
            raise TrajectoryConvergenceError(
                f"standard error {achieved:.3e} above target {max_stderr:.3e}",
                achieved_stderr=achieved, n_trajectories=n, module="spin-chain-oracle",
            )
        return TrajectoryResult(mean=mean, stderr=stderr, n_trajectories=n)
