"""Exception types raised across the package."""


class BDSimError(Exception):
    """Base class for every error raised by bdsim."""


class InfeasibleSpec(BDSimError):
    pass


class GenerationExhausted(BDSimError):
    pass


class InvalidParams(BDSimError):
    pass


class MalformedFrame(BDSimError):
    """A frame that no conformant encoder could have produced.

    Receivers drop such frames and count them as Byzantine evidence.
    """


class PathTooLong(BDSimError):
    pass


class PayloadTooLarge(BDSimError):
    pass


class StoreTooLarge(BDSimError):
    pass


class LocalIdExhausted(BDSimError):
    pass


class NonQuiescent(BDSimError):
    pass


class ConfigError(BDSimError):
    def __init__(self, message: str, *, field: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line


class KeyMismatch(BDSimError):
    pass
