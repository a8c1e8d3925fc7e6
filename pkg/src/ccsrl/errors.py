"""Exception types shared across the pipeline.

The CLI maps these onto exit codes: validation problems exit with 2,
numerical failures with 3.
"""


class CcsrlError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CcsrlError, ValueError):
    """Invalid model, grid, well or run configuration."""


class ContractError(CcsrlError, ValueError):
    """An operation was called with arguments violating its contract."""


class ShapeError(ContractError):
    """Operand shapes are incompatible."""


class NumericalError(CcsrlError, RuntimeError):
    """Base for failures of a numerical procedure."""


class SolverError(NumericalError):
    """The pressure solve did not reach the residual tolerance."""


class IntegrityError(NumericalError):
    """A physical invariant (e.g. saturation bounds) was violated."""


class TrainingError(NumericalError):
    """Training diverged or produced non-finite values."""


class FingerprintMismatch(CcsrlError):
    """Upstream artifacts were produced from a different configuration."""

    def __init__(self, what: str, expected: str, found: str):
        super().__init__(f"{what} fingerprint mismatch: expected {expected}, found {found}")
        self.expected = expected
        self.found = found


class ArtifactError(CcsrlError):
    """A file on disk is missing, truncated or fails its checksum."""
