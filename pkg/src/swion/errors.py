class NumericalError(RuntimeError):
    """A numerical routine failed to converge or decompose."""


class UnderdeterminedError(NumericalError, ValueError):
    """Too little data to constrain the requested fit."""
