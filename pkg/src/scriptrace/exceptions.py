"""Exception hierarchy shared by all modules."""


class ScriptraceError(Exception):
    """Base class for toolkit errors."""


class EmptyInkError(ScriptraceError, ValueError):
    """Raised when an operation needs ink pixels and the input has none."""


class NoInkError(ScriptraceError, ValueError):
    """Raised when a page offers no patch candidates."""


class TooShortError(ScriptraceError, ValueError):
    """Raised when a page has too few text lines to split."""


class IncompleteSetError(ScriptraceError, ValueError):
    """Raised when a writer/style set is missing pages."""


class DimensionMismatchError(ScriptraceError, ValueError):
    """Raised when feature vectors of different lengths are combined."""


class FeatureFileError(ScriptraceError, ValueError):
    """Raised for malformed feature or manifest files.

    Parameters
    ----------
    message : str
        Human readable description.
    line : int, optional
        1-based line number of the offending record.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
