"""Exception hierarchy shared by every module.

Each error carries a human readable ``detail`` and the process ``exit_code``
the CLI reports for it: 1 for domain/validation problems, 2 for I/O and
usage problems.
"""
from __future__ import annotations

from typing import Optional


class EngineError(Exception):
    exit_code: int = 1

    def __init__(self, detail: str, *, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class DegenerateGeometryError(EngineError):
    """A zero-length segment where a direction is required."""


class PreconditionError(EngineError):
    """A caller broke an operation's precondition."""


class EmptyTrajectoryError(EngineError):
    pass


class MalformedInputError(EngineError):
    """Non-finite coordinates or timestamps that do not strictly increase."""


class MismatchError(EngineError):
    """A compressed trajectory is not a subsequence of its raw trajectory."""


class ConfigurationError(EngineError):
    pass


class CorrespondenceError(EngineError):
    """Raw and compressed datasets do not hold the same trajectory ids."""


class InvalidSpecError(EngineError):
    pass


class DataFormatError(EngineError):
    exit_code = 2

    def __init__(self, detail: str, *, path: Optional[str] = None, line: Optional[int] = None):
        where = ''
        if path is not None:
            where = f'{path}'
            if line is not None:
                where += f':{line}'
            where += ': '
        elif line is not None:
            where = f'line {line}: '
        super().__init__(where + detail)
        self.path = path
        self.line = line
