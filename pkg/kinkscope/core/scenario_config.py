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

import configparser
import enum
import logging
import math
from typing import Any, Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from kinkscope.core.bound_states import inverse_decay_length
from kinkscope.core.lattice import Boundary, ballistic_links
from kinkscope.core.unitary import RampKind
from kinkscope.utils.errors import ConfigError

log = logging.getLogger(__name__)

SECTIONS = ("scenario", "lattice", "wells", "evolution", "decoherence", "output")
_NONE = ("", "none")


class ScenarioName(str, enum.Enum):
    DOUBLE_SLIT = "double-slit"
    DECOHERENCE = "decoherence"
    SELF_INTERFERENCE = "self-interference"
    GHZ_DEMO = "ghz-demo"
    ORACLE_VALIDATION = "oracle-validation"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ScenarioSection(_Section):
    name: ScenarioName
    seed: int = Field(default=0, ge=0, lt=2 ** 64)


class LatticeSection(_Section):
    # for ghz-demo and oracle-validation n_sites is the number of spins
    n_sites: int = Field(ge=2)
    g: float = Field(gt=0.0)
    boundary: Boundary = Boundary.HARD_WALL
    tight_binding_threshold: float = Field(default=0.1, gt=0.0)
    guard: int = Field(default=20, ge=1)


class WellsSection(_Section):
    w: float = Field(ge=0.0, lt=1.0)
    # 0 places a single well
    separation: int = Field(default=0, ge=0)
    n0: Optional[int] = Field(default=None, ge=0)

    @field_validator("n0", mode="before")
    @classmethod
    def _blank_is_none(cls, v: Any) -> Any:
        return None if isinstance(v, str) and v.strip().lower() in _NONE else v


class EvolutionSection(_Section):
    t_end: float = Field(gt=0.0)
    n_times: int = Field(default=11, ge=1)
    engine: Literal["eigen", "bessel"] = "eigen"
    ramp: RampKind = RampKind.SUDDEN_OFF
    ramp_duration: float = Field(default=0.0, ge=0.0)
    dt: Optional[float] = Field(default=None, gt=0.0)
    preparation: Literal["exact", "dynamical", "bilocal", "bound"] = "exact"
    relative_phase: Literal["1", "i"] = "1"
    # spin-chain scenarios: bare basis configuration or its one-kink band projection
    kink_start: Literal["dressed", "bare"] = "dressed"

    @field_validator("dt", mode="before")
    @classmethod
    def _blank_is_none(cls, v: Any) -> Any:
        return None if isinstance(v, str) and v.strip().lower() in _NONE else v


class DecoherenceSection(_Section):
    gamma: float = Field(default=0.0, ge=0.0)
    dt: Optional[float] = Field(default=None, gt=0.0)
    method: Literal["auto", "dense", "trajectories"] = "auto"
    n_trajectories: int = Field(default=2000, ge=2)

    @field_validator("dt", mode="before")
    @classmethod
    def _blank_is_none(cls, v: Any) -> Any:
        return None if isinstance(v, str) and v.strip().lower() in _NONE else v


class OutputSection(_Section):
    trace: str = "trace.csv"
    oracle: str = "oracle.csv"
    metrics: str = "metrics.csv"
    config: str = "config.ini"
    coherence: str = "coherence.csv"


class ScenarioConfig(_Section):
    scenario: ScenarioSection
    lattice: LatticeSection
    wells: WellsSection
    evolution: EvolutionSection
    decoherence: DecoherenceSection = DecoherenceSection()
    output: OutputSection = OutputSection()

    @property
    def name(self) -> ScenarioName:
        return self.scenario.name

    def with_seed(self, seed: Optional[int]) -> "ScenarioConfig":
        if seed is None:
            return self
        data = self.model_dump()
        data["scenario"]["seed"] = int(seed)
        return _validate(data)


def master_links(g: float, t_end: float, separation: int, w: float, guard: int = 20) -> int:
    """
    Ballistic bound 2*(2g)*t_end plus L plus a guard band on each side, and
    twelve bound-state decay lengths 1/gamma0 on each side for the tails the
    initial state carries beyond the wells.
    """
    gamma0 = inverse_decay_length(w, g)
    tail = 2 * int(math.ceil(12.0 / gamma0)) if gamma0 > 0.0 else 0
    m = int(math.ceil(4.0 * g * t_end)) + int(separation) + 2 * int(guard) + tail + 1
    # wells symmetric about the centre: M and L have opposite parity
    return m + 1 if (m - int(separation)) % 2 == 0 else m


def default_config(name: str) -> ScenarioConfig:
    """Reference parameter set of each scenario."""
    try:
        scenario = ScenarioName(name)
    except ValueError:
        raise ConfigError(f"unknown scenario {name!r}", scenario=name, known=[s.value for s in ScenarioName]) from None

    if scenario is ScenarioName.DOUBLE_SLIT:
        data = {
            "lattice": {"n_sites": ballistic_links(1.0, 1000.0, 100) + 1, "g": 1.0, "boundary": "effectively-infinite"},
            "wells": {"w": 0.15, "separation": 100},
            "evolution": {"t_end": 1000.0, "n_times": 5, "engine": "bessel"},
        }
    elif scenario is ScenarioName.DECOHERENCE:
        data = {
            "lattice": {"n_sites": master_links(1.0, 100.0, 50, 0.15) + 1, "g": 1.0, "boundary": "effectively-infinite"},
            "wells": {"w": 0.15, "separation": 50},
            "evolution": {"t_end": 100.0, "n_times": 11},
            "decoherence": {"gamma": 0.5, "dt": 0.025},
        }
    elif scenario is ScenarioName.SELF_INTERFERENCE:
        data = {
            "lattice": {"n_sites": 202, "g": 1.0, "boundary": "hard-wall"},
            "wells": {"w": 0.25, "separation": 0},
            "evolution": {"t_end": 300.0, "n_times": 31, "preparation": "bound"},
        }
    elif scenario is ScenarioName.GHZ_DEMO:
        data = {
            "lattice": {"n_sites": 6, "g": 0.1},
            "wells": {"w": 0.0},
            "evolution": {"t_end": 1.0, "n_times": 31},
            "decoherence": {"gamma": 0.5},
        }
    else:
        data = {
            "lattice": {"n_sites": 10, "g": 0.1},
            "wells": {"w": 0.05},
            "evolution": {"t_end": 200.0, "n_times": 21},
        }
    data["scenario"] = {"name": scenario.value}
    return _validate(data)


def parse_config(text: str, scenario: Optional[str] = None, source: str = "<string>") -> ScenarioConfig:
    """
    INI text over the scenario defaults. The scenario comes from [scenario]
    name or, failing that, from the argument; when both are given they must
    agree.
    """
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}", source=source) from e

    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {unknown}", sections=unknown)

    named = parser.get("scenario", "name", fallback=None)
    if named and scenario and named != scenario:
        raise ConfigError(f"{source}: file is for {named!r}, not {scenario!r}", file=named, requested=scenario)
    name = named or scenario
    if not name:
        raise ConfigError(f"{source}: no scenario named ([scenario] name)")

    data = default_config(name).model_dump(mode="json")
    for section in parser.sections():
        for key, value in parser.items(section):
            data.setdefault(section, {})[key] = value
    return _validate(data, source)


def load_config(path: str, scenario: Optional[str] = None) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return parse_config(text, scenario, source=path)


def dump_config(cfg: ScenarioConfig) -> str:
    """INI text that parse_config turns back into an equal config."""
    lines = [f"# kinkscope scenario configuration ({cfg.name.value})"]
    data = cfg.model_dump(mode="json")
    for section in SECTIONS:
        lines.append("")
        lines.append(f"[{section}]")
        for key, value in data[section].items():
            lines.append(f"{key} = {_format(value)}")
    return "\n".join(lines) + "\n"


# internal usage


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _validate(data: Dict[str, Any], source: str = "<defaults>") -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        problems = [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigError(f"{source}: invalid configuration: {'; '.join(problems)}", errors=problems) from None
