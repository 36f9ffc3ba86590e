"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class RobustMCAError(Exception):
    exit_code = 1


class ConfigError(RobustMCAError, ValueError):
    """Invalid run configuration. ``field`` carries the dotted path of the offending key."""

    exit_code = 2

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class NumericError(RobustMCAError, ArithmeticError):
    exit_code = 3


class ContractViolation(RobustMCAError, ValueError):
    exit_code = 4


class BandError(ContractViolation):
    """A coefficient band breaks its bounds or produced a non-finite value."""


class InvalidKernelError(ContractViolation):
    """Kernel weights would be invalid at the requested (control, state, h)."""
