class PlcError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(PlcError, ValueError):
    """Vectors that must share a length do not."""


class DomainError(PlcError, KeyError):
    """A state or action is not part of the model."""

    def __str__(self):
        # KeyError quotes its argument; keep messages readable
        return str(self.args[0]) if self.args else ""


class ParameterError(PlcError, ValueError):
    """A numeric parameter is outside its valid range."""


class ConfigError(PlcError, ValueError):
    """An experiment configuration violates a constraint."""


class CellFailure(PlcError, RuntimeError):
    """A sweep cell raised while running."""


class LedgerError(PlcError, RuntimeError):
    """Ledger mass and the queue recurrence disagree."""
