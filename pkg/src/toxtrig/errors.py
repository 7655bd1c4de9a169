"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration and usage problems exit 1,
data problems exit 2, external-service problems exit 3.
"""


class ToxtrigError(Exception):
    """Base class for all package errors."""


class ConfigError(ToxtrigError):
    """Invalid configuration value, unknown key, or bad CLI usage."""


class DataError(ToxtrigError):
    """Input data violates a contract (corrupt dump, degenerate corpus, ...)."""


class CorpusError(DataError):
    """Structural corpus problem, e.g. duplicate comment ids."""


class DegenerateCorpusError(DataError):
    """A statistic cannot be computed because one category is empty."""


class DatasetError(DataError):
    """Trigger dataset cannot be built (too few examples, bad ratio, ...)."""


class TrainingDivergedError(DataError):
    """Optimization produced a non-finite loss; reduce the learning rate."""


class MissingDependencyError(DataError):
    """A pipeline stage was run before the stage it depends on."""


class ExternalServiceError(ToxtrigError):
    """A remote scoring service could not be used at all."""
