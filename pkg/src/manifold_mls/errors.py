"""Exception hierarchy shared by the library and the CLI.

The CLI maps :class:`ValidationError` to exit code 2 and
:class:`NumericalError` to exit code 3.
"""


class ManifoldMLSError(Exception):
    pass


class ValidationError(ManifoldMLSError, ValueError):
    """Bad input: wrong shapes, out-of-range parameters, degenerate samples."""


class NumericalError(ManifoldMLSError, ArithmeticError):
    """A well-formed problem that the numerics could not resolve."""


class UnisolvencyError(NumericalError):
    pass


class EmptySupportError(NumericalError):
    pass


class SparseNeighborhoodError(NumericalError):
    pass


class NonConvergenceError(NumericalError):
    pass


class FrameError(NumericalError):
    """Step-1 frame violates one of its constraints or is ill-defined."""


class DisconnectedGraphError(NumericalError):
    pass
