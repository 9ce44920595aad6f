"""Warnings and errors raised by the solvers."""


class ConvergenceWarning(UserWarning):
    """An iterative routine stopped at its iteration cap before meeting its tolerance."""


class SolverError(RuntimeError):
    """The proximal gradient solver could not produce a finite iterate."""
