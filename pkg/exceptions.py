"""
Custom Exceptions for AE-Modem
==============================

This module defines the exception hierarchy shared by the network core,
the modem model, the channel simulators, the trainer and the CLI.

1. **Categorize Errors**: one type per failure class (domain, shape, numerics, ...)
2. **Carry Context**: every error keeps a details dict for logs and manifests
3. **Map to Exit Codes**: the CLI turns each class into a stable exit code

Exception Hierarchy:
    ModemError (base)
    ├── InputDomainError
    ├── StructuralError
    ├── NumericalError
    ├── ConfigurationError
    ├── WeightFormatError
    ├── TrainingDivergedError
    ├── AlignmentError
    ├── CsvSchemaError
    ├── ReportError
    └── VerificationFailedError
"""

from typing import Optional, Sequence


class ModemError(Exception):
    """
    Base exception for all AE-Modem errors.

    Catch this to handle every modem-related failure with a single clause:

        try:
            pipeline.run_sweep(...)
        except ModemError as e:
            logger.error(f"Modem error: {e}")

    Attributes:
        message: Human-readable error description
        details: Additional context (dict, JSON-serializable)
    """

    exit_code: int = 1

    def __init__(
        self,
        message: str,
        details: Optional[dict] = None
    ):
        self.message = message
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> dict:
        """Convert to a structured dict (used in run manifests and --verbose output)."""
        return {
            "error_type": self.__class__.__name__,
            "message": self.message,
            "details": self.details
        }


# =============================================================================
# Input and Shape Errors
# =============================================================================

class InputDomainError(ModemError):
    """Raised when a value lies outside its admissible range (symbol, offset, attenuation)."""

    def __init__(self, name: str, value, allowed: str):
        super().__init__(
            message=f"{name}={value} outside admissible range {allowed}",
            details={
                "name": name,
                "value": value if isinstance(value, (int, float, str)) else repr(value),
                "allowed": allowed
            }
        )


class StructuralError(ModemError):
    """Raised when tensor shapes do not agree with what a layer or model expects."""

    def __init__(self, where: str, expected, actual):
        super().__init__(
            message=f"Shape mismatch in {where}: expected {expected}, got {actual}",
            details={
                "where": where,
                "expected": str(expected),
                "actual": str(actual)
            }
        )


class NumericalError(ModemError):
    """Raised when a forward or backward pass produces NaN/Inf."""

    def __init__(self, layer_index: int, layer_name: str, phase: str = "forward"):
        super().__init__(
            message=f"Non-finite values in {phase} pass at layer {layer_index} ({layer_name})",
            details={
                "layer_index": layer_index,
                "layer_name": layer_name,
                "phase": phase
            }
        )


# =============================================================================
# Configuration and Persistence Errors
# =============================================================================

class ConfigurationError(ModemError):
    """Raised when there's a configuration problem."""

    def __init__(self, setting_name: str, issue: str):
        super().__init__(
            message=f"Configuration error for '{setting_name}': {issue}",
            details={
                "setting_name": setting_name,
                "issue": issue
            }
        )


class WeightFormatError(ModemError):
    """Raised when a weight bundle does not match the architecture its config implies."""

    def __init__(self, layer_name: str, reason: str, path: Optional[str] = None):
        super().__init__(
            message=f"Invalid weight bundle at layer '{layer_name}': {reason}",
            details={
                "layer_name": layer_name,
                "reason": reason,
                "path": path
            }
        )


# =============================================================================
# Training and Evaluation Errors
# =============================================================================

class TrainingDivergedError(ModemError):
    """Raised when the loss stays above ln M + margin for too long, or turns non-finite."""

    exit_code = 2

    def __init__(self, step: int, reason: str, recent_losses: Sequence[float] = ()):
        super().__init__(
            message=f"Training diverged at step {step}: {reason}",
            details={
                "step": step,
                "reason": reason,
                "recent_losses": [float(x) for x in list(recent_losses)[-10:]]
            }
        )


class AlignmentError(ModemError):
    """Raised when sent and decoded sequences have no overlap at any admissible lag."""

    def __init__(self, sent_length: int, decoded_length: int, max_lag: int):
        super().__init__(
            message=(
                f"No overlap between sent ({sent_length}) and decoded ({decoded_length}) "
                f"sequences within lag ±{max_lag}"
            ),
            details={
                "sent_length": sent_length,
                "decoded_length": decoded_length,
                "max_lag": max_lag
            }
        )


# =============================================================================
# Reporting and Verification Errors
# =============================================================================

class CsvSchemaError(ModemError):
    """Raised when a CSV file has an unknown schema version or missing columns."""

    def __init__(self, path: str, issue: str):
        super().__init__(
            message=f"CSV schema error in {path}: {issue}",
            details={
                "path": path,
                "issue": issue
            }
        )


class ReportError(ModemError):
    """Raised when report inputs are inconsistent with the requested chart."""

    def __init__(self, reason: str, inputs: Sequence[str] = ()):
        super().__init__(
            message=f"Cannot build report: {reason}",
            details={
                "reason": reason,
                "inputs": [str(p) for p in inputs]
            }
        )


class VerificationFailedError(ModemError):
    """Raised when one or more layer kinds fail the finite-difference gradient check."""

    exit_code = 3

    def __init__(self, failed_layers: Sequence[str], worst_error: float):
        super().__init__(
            message=f"Gradient check failed for: {', '.join(failed_layers)}",
            details={
                "failed_layers": list(failed_layers),
                "worst_relative_error": worst_error
            }
        )
