"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid topology, run configuration or CLI arguments."""


class NumericalFailure(ArithmeticError):
    """A forward pass, environment step or optimizer update went non-finite."""


class ParseError(ValueError):
    """Malformed parameter or CSV file.

    Carries the offending path and 1-based line number when known.
    """

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
