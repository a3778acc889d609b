"""Exception types shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific one that applies instead of bare ValueError.
"""


class WaterwaveError(Exception):
    """Base class for all package errors."""


class DataError(WaterwaveError):
    """Bad input data: unreadable files, shape mismatches, gaps, corrupt checkpoints."""


class NumericalError(WaterwaveError):
    """Numerical failure: non-finite losses/gradients, non-convergence, undefined metrics."""
