"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so new error conditions
should reuse one of the existing classes where possible.
"""


class PhaseformerError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(PhaseformerError, ValueError):
    """Operands have incompatible or invalid dimensions."""


class ContractError(PhaseformerError, ValueError):
    """An input violates a documented precondition (not a shape issue)."""


class DataError(PhaseformerError, ValueError):
    """A dataset is malformed, empty, or too short for the request."""


class SpecError(PhaseformerError, ValueError):
    """A synthetic-data specification is degenerate or ill-posed."""


class ConfigMismatchError(PhaseformerError, ValueError):
    """A checkpoint and a dataset/request disagree on configuration."""
