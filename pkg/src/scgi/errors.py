"""Exception hierarchy shared by every subpackage."""


class ScgiError(Exception):
    """Base class for runtime and numeric failures."""


class DomainError(ScgiError, ValueError):
    """An argument lies outside the domain of the operation."""


class InsufficientDataError(ScgiError):
    """Too few frames (or blocks) to form the requested statistic."""


class UnsupportedOrderError(ScgiError, ValueError):
    pass


class PreconditionError(ScgiError):
    pass


class NotResolvedError(ScgiError):
    """A curve does not show two separated features."""


class SolverError(ScgiError):
    pass


class OutOfRangeError(ScgiError):
    pass


class ConfigError(Exception):
    """Invalid experiment configuration. ``key`` and ``line`` locate the offender."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
