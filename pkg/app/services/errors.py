# app/services/errors.py


class RhombusError(Exception):
    """Base error. `exit_code` is what the CLI exits with when this escapes a command."""

    exit_code = 1

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{key}={value}" for key, value in self.context.items())
        return f"{self.message} ({details})"


class ConfigError(RhombusError):
    exit_code = 2


class InvalidInputError(RhombusError):
    exit_code = 2


class TransformationError(RhombusError):
    exit_code = 2


class ConditioningError(RhombusError):
    exit_code = 2


class DecouplingError(RhombusError):
    exit_code = 2


class BasisError(RhombusError):
    exit_code = 2


class OperatorError(RhombusError):
    exit_code = 2


class AliasingError(RhombusError):
    exit_code = 2


class ChannelError(RhombusError):
    exit_code = 2


class ConvergenceError(RhombusError):
    exit_code = 3


class FitError(RhombusError):
    exit_code = 3


class OutputError(RhombusError):
    exit_code = 4
