"""
Centralized Exceptions
Error taxonomy and structured error records for the lab.
"""

from typing import Dict, Any, Optional


class HelmDDError(Exception):
    """Base exception for the Helmholtz domain-decomposition lab."""

    def __init__(self, message: str, error_code: str = "UNKNOWN", details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.error_code = error_code
        self.details = details or {}
        super().__init__(self.message)


class ValidationError(HelmDDError):
    """Input violates an operation precondition."""

    def __init__(self, message: str = "Validation failed", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "VALIDATION_ERROR", details)


class ConfigurationError(HelmDDError):
    """Experiment config could not be parsed or validated."""

    def __init__(self, message: str = "Configuration error", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "CONFIG_ERROR", details)


class MeshError(HelmDDError):
    """Mesh construction or interface lookup failed."""

    def __init__(self, message: str = "Mesh error", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "MESH_ERROR", details)


class ResourceGuardError(HelmDDError):
    """Problem size exceeds a configured cap."""

    def __init__(self, message: str = "Resource guard triggered", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "RESOURCE_GUARD", details)


class SingularMatrixError(HelmDDError):
    """Factorization hit a zero or tiny pivot."""

    def __init__(self, message: str = "Singular matrix", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "SINGULAR_MATRIX", details)


class ConvergenceError(HelmDDError):
    """Iteration did not reach its tolerance."""

    def __init__(self, message: str = "No convergence", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "CONVERGENCE_ERROR", details)


class DecompositionError(HelmDDError):
    """Subdomain cover or partition of unity is invalid."""

    def __init__(self, message: str = "Invalid decomposition", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "DECOMPOSITION_ERROR", details)


class NonHarmonicError(HelmDDError):
    """Local vector is not discrete Helmholtz-harmonic."""

    def __init__(self, message: str = "Vector is not discrete-harmonic", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "NON_HARMONIC", details)


class PartitionFileError(HelmDDError):
    """Partition file is malformed."""

    def __init__(self, message: str = "Malformed partition file", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "PARTITION_FILE", details)


# Exit status per error family, used by main.py
ERROR_TO_EXIT_STATUS = {
    ConfigurationError: 2,
    ValidationError: 2,
    ResourceGuardError: 3,
}


def exit_status_for(error: Exception) -> int:
    """Map an exception to the CLI exit status."""
    return ERROR_TO_EXIT_STATUS.get(type(error), 1)


def _plain(value: Any) -> Any:
    # numpy scalars and arrays; the manifest is plain JSON
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "tolist"):
        return _plain(value.tolist())
    return value


def create_structured_error_response(error: Exception) -> Dict[str, Any]:
    """Create a structured error record for logging and the run manifest."""
    if isinstance(error, HelmDDError):
        return {
            "error_type": error.error_code,
            "message": error.message,
            "details": _plain(error.details),
        }
    return {
        "error_type": "UNKNOWN_ERROR",
        "message": str(error),
        "details": {"exception": type(error).__name__},
    }
