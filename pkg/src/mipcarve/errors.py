"""Exception hierarchy shared by the library and the CLI.

Every error carries a short machine-readable ``code`` and the process exit
status the CLI maps it to.
"""


class MipCarveError(Exception):
    code = "error"
    exit_status = 3

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code


class FormatError(MipCarveError):
    """A file could not be parsed (bad magic, truncated payload, ...)."""

    code = "format"


class ShapeError(MipCarveError, ValueError):
    code = "shape"


class AnnotationError(MipCarveError, ValueError):
    code = "annotation"


class NumericError(MipCarveError, ArithmeticError):
    code = "numeric"
    exit_status = 4
