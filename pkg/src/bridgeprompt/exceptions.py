"""Exception types raised across the package."""


class BridgePromptError(Exception):
    """Base class for all package errors."""


class ParseError(BridgePromptError, ValueError):
    """A text file could not be parsed; carries the offending line number."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ValidationError(BridgePromptError, ValueError):
    """An object violates a documented invariant."""


class FormatError(BridgePromptError, ValueError):
    """A binary file has a bad magic, version or layout."""


class LengthError(FormatError):
    """A binary payload is shorter or longer than its header announces."""


class TrainingDiverged(BridgePromptError, RuntimeError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, message, step=None, terms=None):
        self.step = step
        self.terms = terms or {}
        super().__init__(message)
