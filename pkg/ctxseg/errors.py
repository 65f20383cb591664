from typing import Optional, Sequence


class CtxSegError(Exception):
    """Base class for every error raised by the library."""


class ShapeError(CtxSegError, ValueError):
    def __init__(self, message: str, dim: Optional[str] = None) -> None:
        super().__init__(message)
        self.dim = dim


class InvalidArgumentError(CtxSegError, ValueError):
    pass


class ConfigurationError(CtxSegError, ValueError):
    pass


class DataError(CtxSegError, ValueError):
    def __init__(self, message: str, index: Optional[Sequence[int]] = None) -> None:
        super().__init__(message)
        self.index = tuple(index) if index is not None else None


class RasterParseError(DataError):
    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class MissingGradientError(CtxSegError, KeyError):
    def __init__(self, name: str) -> None:
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"No gradient for parameter {self.name!r}"


class UndefinedMetricError(CtxSegError, ArithmeticError):
    pass


class ContractError(CtxSegError, RuntimeError):
    pass


class CheckpointError(CtxSegError, ValueError):
    pass
