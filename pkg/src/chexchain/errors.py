"""Error taxonomy shared by every module.

Validation problems (bad configs, bad shapes, bad files) are distinct from
runtime failures (numeric domain violations, misuse of stateful objects) so
the CLI can map them to exit codes 1 and 2 respectively.
"""


class ChexError(Exception):
    """Base class for all library errors."""


class ConfigurationError(ChexError):
    """A config value, shape, or dimension is inconsistent or out of range."""


class IngestionError(ChexError):
    """A dataset file or row could not be read or parsed."""


class NumericDomainError(ChexError):
    """An operation received a value outside its mathematical domain."""

    def __init__(self, message: str, index=None):
        super().__init__(message)
        self.index = index


class UsageError(ChexError):
    """An API was called in an unsupported way or order."""


class StateError(ChexError):
    """A stateful object was used before it was ready."""


class UndefinedMetricError(ChexError):
    """The metric is mathematically undefined on the given inputs."""
