"""Exception types raised across the pipeline."""


class FingerError(ValueError):
    """Base class for every domain error raised by plainfinger."""


class KernelTooLarge(FingerError):
    pass


class InvalidFactor(FingerError):
    pass


class InvalidKernel(FingerError):
    pass


class DegenerateImage(FingerError):
    pass


class ShapeMismatch(FingerError):
    pass


class AngleOutOfRange(FingerError):
    pass


class UnsupportedSpan(FingerError):
    pass


class EmptyMinutiae(FingerError):
    pass


class OutOfBounds(FingerError):
    pass


class EmptyRoi(FingerError):
    pass


class ConfigError(FingerError):
    pass


class ParseError(FingerError):
    """Malformed input file. ``line`` is 1-based, or None when not line-specific."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class PipelineError(FingerError):
    """A stage failure, tagged with the stage name."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
