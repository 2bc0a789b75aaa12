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

import json
import logging
import sys
import traceback
from typing import Any, Callable, Dict, Optional, TextIO

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_IO = 4


class KinkscopeError(RuntimeError):
    """
    Base error. Carries a process exit code and a context dict
    (module, step, offending parameters) for the machine-readable record.
    """

    exit_code = EXIT_INTERNAL

    def __init__(self, message: str, **context: Any) -> None:
        super().__init__(message)
        self.context: Dict[str, Any] = dict(context)

    def with_context(self, **context: Any) -> "KinkscopeError":
        # lower layers raise with local context; callers add module/step on the way up
        for k, v in context.items():
            self.context.setdefault(k, v)
        return self


class ConfigError(KinkscopeError, ValueError):
    exit_code = EXIT_CONFIG


class InvariantViolation(KinkscopeError):
    exit_code = EXIT_INVARIANT


class EdgeContactError(InvariantViolation):
    pass


class NonAdiabaticPreparation(InvariantViolation):
    def __init__(self, message: str, fidelity: float, **context: Any) -> None:
        super().__init__(message, fidelity=fidelity, **context)
        self.fidelity = float(fidelity)


class RootFindingError(InvariantViolation):
    def __init__(self, message: str, bracket, **context: Any) -> None:
        super().__init__(message, bracket=list(bracket), **context)
        self.bracket = tuple(bracket)


class TrajectoryConvergenceError(InvariantViolation):
    pass


class TraceFormatError(KinkscopeError):
    exit_code = EXIT_IO

    def __init__(self, message: str, line: Optional[int] = None, **context: Any) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, line=line, **context)
        self.line = line


class DuplicateScenarioError(KinkscopeError):
    pass


def error_record(exc: BaseException) -> Dict[str, Any]:
    if isinstance(exc, KinkscopeError):
        code = exc.exit_code
        ctx = exc.context
    elif isinstance(exc, OSError):
        code = EXIT_IO
        ctx = {"filename": getattr(exc, "filename", None)}
    else:
        code = EXIT_INTERNAL
        ctx = {}
    return {
        "error": type(exc).__name__,
        "exit_code": code,
        "message": str(exc),
        "context": ctx,
    }


def notify_error(exc: BaseException, stream: Optional[TextIO] = None) -> int:
    """
    Write a one-line JSON error record and return the exit code it maps to.
    """
    rec = error_record(exc)
    out = stream if stream is not None else sys.stderr
    out.write(json.dumps(rec, sort_keys=True, default=str) + "\n")
    out.flush()
    return int(rec["exit_code"])


def install_cli_exception_hook(on_shutdown: Optional[Callable[[], None]] = None) -> None:
    """
    Catch unhandled exceptions, log the traceback, emit the error record.
    """

    def _hook(exc_type, exc_value, exc_tb):
        try:
            msg = "".join(traceback.format_exception(exc_type, exc_value, exc_tb))
            log.error("Unhandled exception\n%s", msg[:6000])
            if on_shutdown is not None:
                try:
                    on_shutdown()
                except Exception:
                    pass
            notify_error(exc_value)
        finally:
            sys.__excepthook__(exc_type, exc_value, exc_tb)

    sys.excepthook = _hook
