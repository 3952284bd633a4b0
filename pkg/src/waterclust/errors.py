class WaterclustError(Exception):
    """Base class for all package errors."""


class SchemaError(WaterclustError):
    """A column or attribute required by the schema is missing or mistyped."""


class ParseError(WaterclustError):
    """A cell could not be parsed as the kind its attribute declares."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigError(WaterclustError):
    """Invalid parameter or configuration value."""


class InputError(WaterclustError):
    """Malformed numeric input (non-finite matrix, misaligned labels, ...)."""
