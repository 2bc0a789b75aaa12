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

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from kinkscope import __version__
from kinkscope.core.scenario_config import OutputSection, ScenarioName, default_config, dump_config, load_config
from kinkscope.core.scenario_runner import ScenarioRunner, analyze
from kinkscope.utils.errors import EXIT_OK, KinkscopeError, install_cli_exception_hook, notify_error

log = logging.getLogger("kinkscope")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kinkscope", description="Single-kink Ising chain simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    scenarios = [s.value for s in ScenarioName]

    sim = sub.add_parser("simulate", help="run a scenario and write trace, oracle and metrics CSV")
    sim.add_argument("scenario", choices=scenarios)
    sim.add_argument("--config", default=None, help="INI file over the scenario defaults")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", type=int, default=None)

    ana = sub.add_parser("analyze", help="recompute metrics from a trace CSV")
    ana.add_argument("--in", dest="trace", required=True)
    ana.add_argument("--out", required=True)
    ana.add_argument("--oracle", default=None, help="oracle trace CSV for the L1 distance (default: oracle.csv next to --in)")
    ana.add_argument("--coherence", default=None, help="GHZ coherence CSV (default: coherence.csv next to --in)")

    dft = sub.add_parser("defaults", help="print the default configuration of a scenario")
    dft.add_argument("scenario", choices=scenarios)
    return parser


def _simulate(args: argparse.Namespace) -> int:
    if args.config:
        cfg = load_config(args.config, args.scenario)
    else:
        cfg = default_config(args.scenario)
    cfg = cfg.with_seed(args.seed)

    runner = ScenarioRunner(
        on_status=lambda msg: log.info(msg),
        on_error=lambda title, msg: log.error("%s: %s", title, msg),
    )
    report = runner.run(cfg, args.out)
    print(json.dumps(report.summary(), sort_keys=True, default=str))
    return EXIT_OK


def _sibling(trace_path: str, given: Optional[str], name: str) -> Optional[str]:
    if given:
        return given
    path = os.path.join(os.path.dirname(trace_path), name)
    return path if os.path.isfile(path) else None


def _analyze(args: argparse.Namespace) -> int:
    out = OutputSection()
    oracle = _sibling(args.trace, args.oracle, out.oracle)
    coherence = _sibling(args.trace, args.coherence, out.coherence)
    if oracle:
        log.info("oracle: %s", oracle)
    metrics = analyze(args.trace, args.out, oracle, coherence)
    log.info("metrics written to %s (%d keys)", args.out, len(metrics))
    return EXIT_OK


def _defaults(args: argparse.Namespace) -> int:
    sys.stdout.write(dump_config(default_config(args.scenario)))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format=LOG_FORMAT,
        stream=sys.stderr,
    )
    install_cli_exception_hook(logging.shutdown)

    commands = {"simulate": _simulate, "analyze": _analyze, "defaults": _defaults}
    try:
        return commands[args.command](args)
    except (KinkscopeError, OSError) as e:
        log.debug("command failed", exc_info=True)
        return notify_error(e)
