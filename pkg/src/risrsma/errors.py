"""Shared exception types."""


class ConfigurationError(ValueError):
    """Invalid configuration value; the message names the offending field."""


class StructuralError(ValueError):
    """Dimension mismatch or structurally empty input."""


class NumericDomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""
