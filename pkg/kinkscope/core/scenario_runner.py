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
import os
from dataclasses import dataclass, field, replace
from threading import RLock
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from kinkscope.core import csv_io
from kinkscope.core.analysis import ghz_metrics, metrics_from_trace
from kinkscope.core.bound_states import beat_frequency, well_pair
from kinkscope.core.eigencache import lowest_states
from kinkscope.core.lattice import (
    KinkDensityMatrix,
    KinkState,
    LatticeSpec,
    build_hamiltonian,
    hamiltonian_bands,
    normalize,
)
from kinkscope.core.open_dynamics import (
    DephasingConfig,
    diffusion_constant,
    diffusion_oracle,
    evolve_master,
    lorentzian_oracle,
)
from kinkscope.core.scenario_config import ScenarioConfig, ScenarioName, dump_config
from kinkscope.core.spin_chain import (
    GhzDecay,
    SpinChainSpec,
    full_evolve_dephasing,
    full_evolve_pure,
    ghz_decoherence_demo,
)
from kinkscope.core.trace_buffer import ProbabilityTrace, TraceRecorder
from kinkscope.core.unitary import (
    RampSchedule,
    eigen_propagate,
    fringes_for_spec,
    prepare_bilocal_tunneling,
    prepare_psi_plus,
    run_release,
)
from kinkscope.utils.errors import ConfigError, DuplicateScenarioError, KinkscopeError
from kinkscope.utils.timebase import Stopwatch, output_grid

log = logging.getLogger(__name__)

# above this Gamma/g the strong-decoherence (diffusive) oracle applies
DIFFUSIVE_RATIO = 0.1

Handler = Callable[[ScenarioConfig], "ScenarioOutput"]


@dataclass(frozen=True)
class ScenarioOutput:
    trace: ProbabilityTrace
    oracle: ProbabilityTrace
    extras: Dict[str, Any] = field(default_factory=dict)
    ghz: Optional[GhzDecay] = None


@dataclass(frozen=True)
class ScenarioReport:
    scenario: str
    out_dir: str
    files: Dict[str, str]
    metrics: Dict[str, float]
    extras: Dict[str, Any] = field(default_factory=dict)

    def summary(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "out_dir": self.out_dir,
            "files": dict(self.files),
            "metrics": dict(self.metrics),
            "extras": dict(self.extras),
        }


def build_lattice(cfg: ScenarioConfig) -> LatticeSpec:
    lat, wells = cfg.lattice, cfg.wells
    n_links = lat.n_sites - 1
    if wells.n0 is None:
        spec = LatticeSpec.centered(
            n_links, lat.g, wells.w,
            separation=wells.separation or None,
            boundary=lat.boundary,
        )
    else:
        placed = {wells.n0: wells.w}
        if wells.separation:
            placed[wells.n0 + wells.separation] = wells.w
        spec = LatticeSpec(lat.n_sites, lat.g, tuple(placed.items()), lat.boundary)
    return LatticeSpec(
        spec.n_sites, spec.g, spec.wells, spec.boundary,
        tight_binding_threshold=lat.tight_binding_threshold,
    )


def prepare_initial(cfg: ScenarioConfig, spec: LatticeSpec) -> Tuple[KinkState, Dict[str, Any]]:
    """Initial kink state named by [evolution] preparation."""
    how = cfg.evolution.preparation
    if how == "bound":
        if len(spec.active_wells) != 1:
            raise ConfigError("bound preparation needs a single well", wells=list(spec.active_wells))
        diag, off = hamiltonian_bands(spec)
        _, vecs = lowest_states(diag, off, 1)
        v = vecs[:, 0]
        return KinkState(normalize(-v if v.sum() < 0.0 else v)), {"preparation": how}
    if how == "bilocal":
        n0, L, w = well_pair(spec)
        # quarter of the tunneling beat: equal weights on both wells
        t_prep = 0.25 * math.pi / beat_frequency(w, spec.g, L)
        state = prepare_bilocal_tunneling(spec, t_prep)
        return KinkState(state.amplitudes), {"preparation": how, "preparation_time": t_prep}
    state = prepare_psi_plus(spec, dynamical=(how == "dynamical"))
    return state, {"preparation": how}


class ScenarioRunner:
    """
    Executes one scenario configuration and writes its files. Handlers are
    registered per scenario name; a second registration under the same name
    is rejected.
    """

    def __init__(
        self,
        on_status: Optional[Callable[[str], None]] = None,
        on_error: Optional[Callable[[str, str], None]] = None,
    ) -> None:
        self._lock = RLock()
        self._handlers: Dict[str, Handler] = {}
        self.on_status = on_status or (lambda _msg: None)
        self.on_error = on_error or (lambda _title, _msg: None)
        self.register(ScenarioName.DOUBLE_SLIT.value, self._double_slit)
        self.register(ScenarioName.DECOHERENCE.value, self._decoherence)
        self.register(ScenarioName.SELF_INTERFERENCE.value, self._self_interference)
        self.register(ScenarioName.GHZ_DEMO.value, self._ghz_demo)
        self.register(ScenarioName.ORACLE_VALIDATION.value, self._oracle_validation)

    # public API

    def register(self, name: str, handler: Handler) -> None:
        with self._lock:
            if name in self._handlers:
                raise DuplicateScenarioError(f"scenario '{name}' is already registered", scenario=name)
            self._handlers[name] = handler

    def list_scenarios(self) -> List[str]:
        with self._lock:
            return list(self._handlers.keys())

    def run(self, cfg: ScenarioConfig, out_dir: str) -> ScenarioReport:
        name = cfg.name.value
        with self._lock:
            handler = self._handlers.get(name)
        if handler is None:
            raise ConfigError(f"no handler for scenario '{name}'", scenario=name)

        sw = Stopwatch()
        self.on_status(f"{name}: started (seed {cfg.scenario.seed})")
        try:
            result = handler(cfg)
        except KinkscopeError as e:
            e.with_context(scenario=name)
            self.on_error("Scenario Error", str(e))
            raise

        out = cfg.output
        files = {
            "trace": os.path.join(out_dir, out.trace),
            "oracle": os.path.join(out_dir, out.oracle),
            "metrics": os.path.join(out_dir, out.metrics),
            "config": os.path.join(out_dir, out.config),
        }
        os.makedirs(out_dir, exist_ok=True)
        csv_io.write_text_atomic(files["config"], dump_config(cfg))
        csv_io.write_trace(files["trace"], result.trace)
        csv_io.write_trace(files["oracle"], result.oracle)
        if result.ghz is not None:
            ghz = result.ghz
            files["coherence"] = os.path.join(out_dir, out.coherence)
            csv_io.write_coherence(files["coherence"], ghz.times, ghz.coherence, np.exp(-ghz.expected_rate * ghz.times))

        # metrics from what was written, so analyze on the files reproduces them exactly
        metrics = analyze_files(files["trace"], files["oracle"], files.get("coherence"))
        csv_io.write_metrics(files["metrics"], metrics)

        self.on_status(f"{name}: done in {sw.elapsed():.2f}s")
        return ScenarioReport(scenario=name, out_dir=out_dir, files=files, metrics=metrics, extras=result.extras)

    # scenario handlers

    def _times(self, cfg: ScenarioConfig) -> np.ndarray:
        return output_grid(cfg.evolution.t_end, cfg.evolution.n_times)

    def _release(self, cfg: ScenarioConfig, spec: LatticeSpec, initial: KinkState, times: np.ndarray) -> ProbabilityTrace:
        ev = cfg.evolution
        return run_release(
            spec, initial, RampSchedule(ev.ramp, ev.ramp_duration), times,
            engine=ev.engine, dt=ev.dt, guard=cfg.lattice.guard, on_status=self.on_status,
        )

    def _master(self, cfg: ScenarioConfig, spec: LatticeSpec, initial: KinkState, times: np.ndarray) -> ProbabilityTrace:
        ev, dec = cfg.evolution, cfg.decoherence
        if not RampSchedule(ev.ramp, ev.ramp_duration).is_sudden:
            raise ConfigError("dephasing runs release the wells suddenly; set ramp = sudden-off", ramp=ev.ramp.value)
        rho = KinkDensityMatrix.from_state(initial)
        trace, _ = evolve_master(
            rho, build_hamiltonian(spec.released()),
            DephasingConfig(dec.gamma, dt=dec.dt, times=tuple(times)),
            float(times[-1]), spec=spec.released(), guard=cfg.lattice.guard, on_status=self.on_status,
        )
        return trace

    def _double_slit(self, cfg: ScenarioConfig):
        spec = build_lattice(cfg)
        times = self._times(cfg)
        initial, extras = prepare_initial(cfg, spec)
        if cfg.decoherence.gamma > 0.0:
            trace = self._master(cfg, spec, initial, times)
        else:
            trace = self._release(cfg, spec, initial, times)
        rows = [trace.distributions[0] if t == 0.0 else fringes_for_spec(spec, t, cfg.evolution.relative_phase) for t in times]
        oracle = ProbabilityTrace(times, np.array(rows), {"oracle": "fringes"})
        return ScenarioOutput(trace, oracle, extras)

    def _decoherence(self, cfg: ScenarioConfig):
        spec = build_lattice(cfg)
        times = self._times(cfg)
        initial, extras = prepare_initial(cfg, spec)
        gamma = cfg.decoherence.gamma
        if gamma == 0.0:
            trace = self._release(cfg, spec, initial, times)
            oracle = ProbabilityTrace(times, trace.distributions, {"oracle": "pure"})
            return ScenarioOutput(trace, oracle, extras)

        trace = self._master(cfg, spec, initial, times)
        p0 = trace.distributions[0]
        if gamma > DIFFUSIVE_RATIO * spec.g:
            D = diffusion_constant(spec.g, gamma)
            rows = [diffusion_oracle(p0, D, t) for t in times]
            extras.update(oracle="diffusion", diffusion_constant=D)
        else:
            pure = self._release(cfg, spec, initial, times)
            rows = [lorentzian_oracle(p, spec.g, gamma, t) for p, t in zip(pure.distributions, times)]
            extras.update(oracle="lorentzian")
        return ScenarioOutput(trace, ProbabilityTrace(times, np.array(rows), {"oracle": extras["oracle"]}), extras)

    def _self_interference(self, cfg: ScenarioConfig):
        spec = build_lattice(cfg)
        times = self._times(cfg)
        initial, extras = prepare_initial(cfg, spec)
        pure = self._release(cfg, spec, initial, times)
        gamma = cfg.decoherence.gamma
        if gamma == 0.0:
            # the lattice is mirror symmetric about the well, so is the exact pattern
            oracle = ProbabilityTrace(times, pure.distributions[:, ::-1], {"oracle": "mirror"})
            return ScenarioOutput(pure, oracle, extras)
        trace = self._master(cfg, spec, initial, times)
        rows = [lorentzian_oracle(p, spec.g, gamma, t) for p, t in zip(pure.distributions, times)]
        extras.update(oracle="lorentzian")
        return ScenarioOutput(trace, ProbabilityTrace(times, np.array(rows), {"oracle": "lorentzian"}), extras)

    def _spin_chain(self, cfg: ScenarioConfig):
        n_spins = cfg.lattice.n_sites
        spec = build_lattice(cfg)
        times = self._times(cfg)
        chain = SpinChainSpec.with_weak_links(n_spins, spec.g, spec.well_map)
        link = (spec.n_links - 1) // 2
        gamma = cfg.decoherence.gamma
        start = KinkState.localized(spec.n_links, link)
        dressed = cfg.evolution.kink_start == "dressed"

        if gamma == 0.0:
            trace = full_evolve_pure(chain, link, times, dressed=dressed, on_status=self.on_status)
            h = build_hamiltonian(spec)
            recorder = TraceRecorder(metadata={"model": "one-kink"})
            for t in times:
                recorder.push(t, eigen_propagate(start, h, t).probabilities())
            effective = recorder.snapshot()
        else:
            dec = cfg.decoherence
            trace = full_evolve_dephasing(
                chain, link, gamma, times, seed=cfg.scenario.seed, method=dec.method,
                n_trajectories=dec.n_trajectories, dressed=dressed, on_status=self.on_status,
            )
            effective, _ = evolve_master(
                KinkDensityMatrix.from_state(start), build_hamiltonian(spec),
                DephasingConfig(gamma, times=tuple(times)), float(times[-1]),
            )
        oracle = ProbabilityTrace(times, effective.distributions, {"oracle": "one-kink"})
        extras = {
            "initial_link": link,
            "kink_start": cfg.evolution.kink_start,
            "max_kink_number": trace.metadata.get("max_kink_number"),
        }
        return ScenarioOutput(trace, oracle, extras)

    def _ghz_demo(self, cfg: ScenarioConfig):
        chain = self._spin_chain(cfg)
        # the coherence curve is written even without dephasing, where it stays at 1
        decay = ghz_decoherence_demo(cfg.lattice.n_sites, cfg.decoherence.gamma, self._times(cfg))
        return replace(chain, ghz=decay)

    def _oracle_validation(self, cfg: ScenarioConfig):
        return self._spin_chain(cfg)


def analyze_files(
    trace_path: str,
    oracle_path: Optional[str] = None,
    coherence_path: Optional[str] = None,
) -> Dict[str, float]:
    trace = csv_io.read_trace(trace_path)
    oracle = csv_io.read_trace(oracle_path) if oracle_path else None
    metrics = metrics_from_trace(trace, oracle)
    if coherence_path:
        metrics.update(ghz_metrics(*csv_io.read_coherence(coherence_path)))
    return metrics


def analyze(
    trace_path: str,
    out_path: str,
    oracle_path: Optional[str] = None,
    coherence_path: Optional[str] = None,
) -> Dict[str, float]:
    metrics = analyze_files(trace_path, oracle_path, coherence_path)
    csv_io.write_metrics(out_path, metrics)
    return metrics
