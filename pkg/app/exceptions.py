"""Domain exceptions shared by the services, the CLI and the HTTP routes."""

from typing import Any


class NetGPError(Exception):
    """Base class for every error raised on purpose by this package."""


class GraphError(NetGPError, ValueError):
    """A graph violates an invariant or is unsuitable for the requested operation."""


class DimensionError(NetGPError, ValueError):
    """Orders or matrix shapes do not match."""


class NumericalError(NetGPError, ArithmeticError):
    """A factorization or eigensolve failed; `diagnostics` describes the matrix."""

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None):
        self.diagnostics = diagnostics or {}
        if self.diagnostics:
            details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
            message = f"{message} ({details})"
        super().__init__(message)


class SamplerAbort(NetGPError, RuntimeError):
    """Too many sweeps stalled for the chain to be trusted."""

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class DatasetError(NetGPError, ValueError):
    """A dataset file is malformed; the message names the file and line."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")
