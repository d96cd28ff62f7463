"""Exception types shared across the pipeline.

The CLI maps these to exit codes: InputError -> 2, ConfigError -> 3,
InvariantError -> 4.
"""


class UnipatchError(Exception):
    pass


class ShapeError(UnipatchError, ValueError):
    """Operand shapes are incompatible."""

    def __init__(self, message, *shapes):
        self.shapes = tuple(tuple(s) for s in shapes)
        if shapes:
            message = f"{message}: " + " vs ".join(str(s) for s in self.shapes)
        super().__init__(message)


class InputError(UnipatchError):
    """Input data is missing or malformed."""


class ConfigError(UnipatchError, ValueError):
    """A configuration value is outside its valid range."""


class InvariantError(UnipatchError):
    """An internal consistency check failed."""


class StageError(UnipatchError):
    """Wraps a failure with the name of the pipeline stage it came from."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
