"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An operation received an input violating its preconditions."""


class DegenerateEvidenceError(RuntimeError):
    """Belief update aborted: all modes were astronomically unlikely.

    Callers are expected to fall back to the prior belief and flag the
    event in diagnostics rather than let one outlier destroy the filter.
    """


class ConfigError(ValueError):
    """Experiment configuration is malformed. Message names the field."""
