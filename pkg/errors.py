class SimulationError(Exception):
    """Base class of every error raised by the simulator."""
    pass


class ParameterError(SimulationError, ValueError):
    """Raised when an operation is called with parameters violating its preconditions."""
    pass


class InputError(SimulationError, ValueError):
    """Raised when input data (region tables, edge lists) cannot be used."""
    pass


class ConfigError(InputError):
    """Raised when the run configuration is invalid.

    :ivar problems: List of human readable messages, one per violated constraint.
    """
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("Invalid configuration: %s" % "; ".join(self.problems))


class NumericalError(SimulationError, ArithmeticError):
    """Raised when the opinion state stops being finite."""
    pass
