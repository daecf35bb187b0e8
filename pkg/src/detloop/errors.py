"""Exception hierarchy shared by every detloop module."""

from __future__ import annotations


class DetloopError(Exception):
    """Base class for all detloop errors."""


class SourceError(DetloopError):
    """An error tied to a position in DetScript source."""

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"{message} at line {line} col {column}")
        self.message = message
        self.line = line
        self.column = column


class LexError(SourceError):
    pass


class ParseError(SourceError):
    def __init__(self, expected: str, found: str, line: int, column: int) -> None:
        super().__init__(f"expected {expected}, found {found!r}", line, column)
        self.expected = expected
        self.found = found


class CompileError(SourceError):
    pass


# --- clocks -----------------------------------------------------------------


class ClockOverflow(DetloopError):
    """A clock computation left the unsigned 64-bit range."""


class TargetInPast(DetloopError):
    def __init__(self, now: int, target: int) -> None:
        super().__init__(f"cannot fast-forward from {now} back to {target}")
        self.now = now
        self.target = target


# --- vm ---------------------------------------------------------------------


class VmTrap(DetloopError):
    def __init__(self, reason: str, pc: int | None = None) -> None:
        where = "" if pc is None else f" (pc={pc})"
        super().__init__(f"{reason}{where}")
        self.reason = reason
        self.pc = pc


class StepBudgetExceeded(DetloopError):
    pass


# --- frames / queue ---------------------------------------------------------


class PolicyMismatch(DetloopError):
    pass


class NotYetComplete(DetloopError):
    pass


class AlreadyCompleted(DetloopError):
    pass


class UnknownPlaceholder(DetloopError):
    pass


class AlreadyResolved(DetloopError):
    pass


# --- runtime ----------------------------------------------------------------


class ConfigError(DetloopError):
    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


class UnknownOrigin(DetloopError):
    pass


class UnknownFrame(DetloopError):
    pass


class PhysicalBudgetExceeded(DetloopError):
    pass


class NotRun(DetloopError):
    pass


class TraceFormatError(DetloopError):
    pass
