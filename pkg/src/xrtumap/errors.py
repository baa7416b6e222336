"""Exception hierarchy shared by the library and the CLI.

The CLI maps each family onto a process exit code.
"""


class XrtUmapError(Exception):
    exit_code = 1


class ConfigError(XrtUmapError, ValueError):
    exit_code = 2


class DataError(XrtUmapError, ValueError):
    exit_code = 3


class CubeFormatError(DataError):
    """Malformed cube file; ``offset`` is the first offending byte offset."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(XrtUmapError, ArithmeticError):
    """Raised when an optimizer produces non-finite values."""

    exit_code = 4

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step
