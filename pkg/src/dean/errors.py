"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data/format
errors exit 2, numeric failures exit 3.
"""


class DataFormatError(ValueError):
    """Malformed input data: bad CSV cell, ragged row, schema violation."""


class ModelFormatError(DataFormatError):
    """Model file does not conform to the serialization schema."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where a finite one is required."""
