"""Custom exceptions and the CLI error handlers."""
from typing import Optional

from .logging_config import logger
from .settings import settings


class AppException(Exception):
    """Base application exception."""

    def __init__(self, message: str, exit_code: int = 1, details: Optional[dict] = None):
        self.message = message
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(message)


# ============= Command-level errors =============

class ConfigError(AppException):
    """Invalid run configuration."""

    def __init__(self, field: str, problem: str):
        super().__init__(
            message=f"Invalid configuration field '{field}': {problem}",
            exit_code=2,
            details={"field": field, "error": problem}
        )

    @classmethod
    def from_validation(cls, error, prefix: str = "") -> "ConfigError":
        """Build from a pydantic ValidationError, naming its first failing field."""
        first = error.errors()[0]
        field = ".".join(str(part) for part in first.get("loc", ())) or "<root>"
        return cls(f"{prefix}{field}", first.get("msg", str(error)))


class AssetIOError(AppException):
    """A file could not be read or written."""

    def __init__(self, path: str, original_error: str):
        super().__init__(
            message=f"Cannot access {path}: {original_error}",
            exit_code=3,
            details={"path": str(path), "error": original_error}
        )


class NumericAbortError(AppException):
    """Every optimization restart hit a non-finite value."""

    def __init__(self, restarts: int, last_error: str):
        super().__init__(
            message=f"All {restarts} restarts aborted on non-finite values",
            exit_code=4,
            details={"restarts": restarts, "error": last_error}
        )


class GradcheckFailure(AppException):
    """A finite-difference check exceeded its threshold."""

    def __init__(self, stage: str, parameter: str, error: float, threshold: float):
        super().__init__(
            message=f"Gradient check failed in stage '{stage}' at {parameter}: "
                    f"relative error {error:.3e} > {threshold:.1e}",
            exit_code=1,
            details={"stage": stage, "parameter": parameter, "error": error, "threshold": threshold}
        )


# ============= Library errors =============

class AutodiffDomainError(AppException):
    """An operation was applied outside its mathematical domain."""

    def __init__(self, op: str, reason: str):
        super().__init__(
            message=f"Domain error in '{op}': {reason}",
            details={"op": op, "error": reason}
        )


class MeshError(AppException):
    """A triangle mesh violates its structural invariants."""

    def __init__(self, reason: str, **details):
        super().__init__(message=f"Invalid mesh: {reason}", exit_code=3, details=details)


class RenderOnlyMeshError(MeshError):
    """A non-watertight mesh was used for inside/outside queries."""

    def __init__(self, open_edges: int):
        super().__init__(
            f"mesh is render-only ({open_edges} unpaired edges), it cannot host penetration queries",
            open_edges=open_edges,
        )


class ObjParseError(AppException):
    """Malformed OBJ file."""

    def __init__(self, path: str, line_number: int, reason: str):
        super().__init__(
            message=f"{path}:{line_number}: {reason}",
            exit_code=3,
            details={"path": str(path), "line": line_number, "error": reason}
        )
        self.line_number = line_number


class RigValidationError(AppException):
    """A hand rig violates the rig invariants."""

    def __init__(self, reason: str, **details):
        super().__init__(message=f"Invalid rig: {reason}", exit_code=2, details=details)


class ResolutionMismatchError(AppException):
    """Two images that must share a resolution do not."""

    def __init__(self, expected: tuple, actual: tuple):
        super().__init__(
            message=f"Resolution mismatch: expected {expected[0]}x{expected[1]}, got {actual[0]}x{actual[1]}",
            exit_code=2,
            details={"expected": list(expected), "actual": list(actual)}
        )


class NonFiniteGradientError(AppException):
    """A gradient entry is NaN or infinite."""

    def __init__(self, index: int, value: float):
        super().__init__(
            message=f"Non-finite gradient at parameter index {index}: {value}",
            exit_code=4,
            details={"index": index, "value": value}
        )
        self.index = index


# ============= Handlers =============

def app_exception_handler(exc: AppException) -> int:
    """Log an application exception and return its exit code."""
    logger.error(f"{exc.message}", extra={"details": exc.details})
    return exc.exit_code


def general_exception_handler(exc: Exception) -> int:
    """Log an unexpected exception and return a generic failure code."""
    if settings.debug:
        logger.exception(f"Unexpected error: {exc}")
    else:
        logger.error(f"Unexpected error: {exc}")
    return 1


def handle_exception(exc: Exception) -> int:
    """Dispatch to the matching handler."""
    if isinstance(exc, AppException):
        return app_exception_handler(exc)
    return general_exception_handler(exc)
