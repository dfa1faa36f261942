class InvalidInputError(ValueError):
    """Raised when an operation receives malformed shapes, ranges or parameters."""


class DataError(RuntimeError):
    """Raised for problems in on-disk data (annotation lines, prediction files)."""

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
