"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: DataError -> 2, NumericalError -> 3.
ModelRejected is internal to graph scoring and never escapes to the CLI.
"""


class KinnetError(Exception):
    """Base class for all package errors."""


class DataError(KinnetError):
    """Malformed or inconsistent input data."""


class NumericalError(KinnetError):
    """Numerical breakdown: non-finite states, degenerate parameters."""


class ModelRejected(NumericalError):
    """A candidate graph whose regression is too ill-conditioned to score.

    Raised by the conditional posterior when D'D has condition number
    >= 1e10; callers drop the graph from the model average and log it.
    """
