"""Exception types shared across the package."""


class KgExplainError(Exception):
    """Base class for all package errors."""


class DatasetParseError(KgExplainError):
    """A dataset file could not be parsed (carries file and line context)."""


class DomainError(KgExplainError):
    """An argument violates a documented precondition (unknown id, bad set, ...)."""


class ConfigurationError(KgExplainError):
    """A configuration value is missing, inconsistent, or out of range."""


class TrainingError(KgExplainError):
    """Training diverged or produced non-finite parameters."""
