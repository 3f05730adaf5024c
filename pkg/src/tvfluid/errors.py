"""Exception types raised by the simulator and its audits."""


class TvfError(Exception):
    """Base class for all simulator errors."""


class NotPositiveDefinite(TvfError, ValueError):
    """A conformation tensor lost positive definiteness."""


class NonPositiveTemperature(TvfError, ValueError):
    """A temperature value is zero or negative."""


class QuadratureFailure(TvfError, ArithmeticError):
    """Adaptive quadrature could not reach its tolerance."""


class OutOfRange(TvfError, ValueError):
    """An internal-energy value has no positive temperature preimage."""


class PoissonNoConvergence(TvfError, ArithmeticError):
    """The pressure solve exhausted its iteration budget."""


class PositivityLost(TvfError, ArithmeticError):
    """Temperature or det F became nonpositive during a step."""

    def __init__(self, field, cell, value):
        self.field = field
        self.cell = tuple(int(c) for c in cell)
        self.value = float(value)
        super().__init__(f"{field} lost positivity at cell {self.cell} (value {self.value:.6g})")


class CflViolation(TvfError, ValueError):
    """A fixed time step exceeds twice the stability bound."""


class BlowupDetected(TvfError, ArithmeticError):
    """A Galerkin coefficient grew beyond the blow-up threshold."""


class IncompatibleScenario(TvfError, ValueError):
    """Two trajectories were produced from different models or data."""


class ConfigError(TvfError, ValueError):
    """A scenario configuration file is malformed or out of range."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
