"""
Exception hierarchy for the normalized Dirac solver.
Every failure the library raises derives from NLDiracError so the CLI can map it
to an exit code.
"""


class NLDiracError(Exception):
    """Base class for all library errors."""


class ConfigError(NLDiracError, ValueError):
    """Invalid grid, nonlinearity, solver or run configuration."""


class RepresentationError(NLDiracError, ValueError):
    """Field already in the requested representation."""


class GridMismatchError(NLDiracError, ValueError):
    """Two fields live on different grids."""


class NonFiniteFieldError(NLDiracError, ValueError):
    """Field contains NaN or infinite entries."""


class SingularPointError(NLDiracError, ValueError):
    """Hessian of F requested on its singular set without smoothing."""


class DecompositionError(NLDiracError, ValueError):
    """Invalid (w, eta, lambda) triple."""


class SolverError(NLDiracError, RuntimeError):
    """Base class for solver failures (exit code 1)."""


class InnerSolverError(SolverError):
    """Inner maximization failed."""


class IterationLimitError(SolverError):
    """Iteration cap exceeded."""


class BoundaryViolationError(InnerSolverError):
    """Inner iterate pinned at the safe-region boundary."""


class LineSearchError(SolverError):
    """Armijo backtracking exhausted."""


class SeedError(SolverError):
    """Seed does not satisfy the projection-norm requirement."""


class MultiplierWindowError(SolverError):
    """Nonlinear solve produced omega outside (0, m)."""


EXIT_SUCCESS = 0
EXIT_SOLVER_FAILURE = 1
EXIT_CHECKS_FAILED = 2
EXIT_INVALID_CONFIG = 3


def exit_code_for(exc: BaseException) -> int:
    """Map an exception raised during a run to the CLI exit code."""
    if isinstance(exc, (ConfigError, FileNotFoundError)):
        return EXIT_INVALID_CONFIG
    if isinstance(exc, SolverError):
        return EXIT_SOLVER_FAILURE
    if isinstance(exc, NLDiracError):
        # representation/grid/singular errors surface as solver failures
        return EXIT_SOLVER_FAILURE
    return EXIT_SOLVER_FAILURE
