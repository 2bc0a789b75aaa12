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

import time

import numpy as np


def monotonic_seconds() -> float:
    return time.monotonic()


class Stopwatch:
    """Wall-clock timer for log lines. Never feeds numeric output."""

    def __init__(self) -> None:
        self._t0 = monotonic_seconds()

    def elapsed(self) -> float:
        return monotonic_seconds() - self._t0


def output_grid(t_end: float, n_times: int, t_start: float = 0.0) -> np.ndarray:
    """
    Evenly spaced, strictly increasing output times ending exactly at t_end.
    """
    n = int(n_times)
    if n < 1:
        raise ValueError("n_times must be >= 1")
    if not t_end > t_start:
        raise ValueError("t_end must exceed t_start")
    if n == 1:
        return np.array([float(t_end)])
    return np.linspace(float(t_start), float(t_end), n)
