"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, validation
problems exit 2, numeric failures exit 3.
"""


class HyperspotError(Exception):
    """Base class for all package errors."""


class ValidationError(HyperspotError):
    """Malformed input data or a violated type/operation contract."""


class NumericError(HyperspotError):
    """Numeric failure: singular matrix, diverging loss, non-finite values."""


class PipelineError(HyperspotError):
    """A pipeline stage failed; carries the stage name and the original error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
