"""Exception types shared across the pipeline.

The CLI maps these onto distinct exit codes, so stages must raise
DataFormatError for anything wrong with input files or artifacts and
NumericError for optimization failures.
"""


class DataFormatError(ValueError):
    """Malformed or missing input data, named as precisely as possible."""


class NumericError(RuntimeError):
    """A numeric procedure failed (divergence, component collapse, ...)."""
