"""Exception hierarchy shared by solvers, environments and the CLI."""

from __future__ import annotations


class MFGError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(MFGError, ValueError):
    """An input violates a structural invariant (shape, mask, simplex...)."""


class ConfigError(MFGError, ValueError):
    """An experiment or solver configuration is invalid."""


class TopologyError(MFGError, ValueError):
    """A network topology file could not be parsed or validated.

    ``line`` is the 1-based line number of the offending row, when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConvergenceError(MFGError, RuntimeError):
    """An iterative solver did not reach its tolerance.

    Carries the last observed residual so callers can report how far off
    the iteration was.
    """

    def __init__(self, message: str, residual: float | None = None, diagnostic: dict | None = None):
        self.residual = residual
        self.diagnostic = diagnostic or {}
        if residual is not None:
            message = f"{message} (last residual {residual:.3e})"
        super().__init__(message)
