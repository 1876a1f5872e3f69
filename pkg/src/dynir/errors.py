"""Exception hierarchy shared by all modules."""


class DynIRError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(DynIRError, ValueError):
    pass


class InsufficientSamplesError(DynIRError, ValueError):
    pass


class CapacityError(DynIRError):
    """An enumeration or planning request exceeds its size guard."""


class ParseError(DynIRError, ValueError):
    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class EmptyPoolError(DynIRError):
    pass


class UnsupportedMetricError(DynIRError):
    pass


class ConfigError(DynIRError, ValueError):
    pass
