"""Exception hierarchy shared across the package.

Everything derives from :class:`OtregError` so callers (notably the CLI)
can distinguish configuration/validation problems from numerical failures
at runtime.
"""


class OtregError(Exception):
    """Base class for all package errors."""


class ConfigError(OtregError, ValueError):
    """Invalid configuration value (bad epsilon, mass fraction, backend...)."""


class DimensionError(OtregError, ValueError):
    """Array shape or length inconsistent with the declared dimensions."""


class NegativeTargetError(OtregError, ValueError):
    """Target matrix has a negative entry beyond float-noise tolerance."""


class DegenerateMarginalError(OtregError, ValueError):
    """Marginal vector with non-positive total mass; cannot be normalized."""


class FeasibilityError(OtregError, RuntimeError):
    """Transport problem is infeasible or the LP solver failed."""


class DatasetFormatError(OtregError, ValueError):
    """CSV file does not conform to the dataset schema."""


class TrainingDivergedError(OtregError, RuntimeError):
    """Training produced a non-finite loss; hyperparameters need adjusting."""
