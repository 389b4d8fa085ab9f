"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ValidationError -> 2,
TrainingError (and any other OtbenchError) -> 3.
"""


class OtbenchError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(OtbenchError):
    """Bad input: malformed manifest, invalid parameters, shape mismatch."""


class DegenerateInputError(ValidationError):
    """Input that makes an operation undefined (all-zero plane, constant plane)."""


class TrainingError(OtbenchError):
    """Runtime failure inside a training or benchmark loop."""
