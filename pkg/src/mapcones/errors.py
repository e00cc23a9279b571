"""Exception hierarchy shared by every mapcones module."""

from __future__ import annotations

from typing import Any


class MapConesError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(MapConesError, ValueError):
    pass


class HermiticityError(MapConesError, ValueError):
    pass


class EigenConvergenceError(MapConesError):
    """LAPACK failed to diagonalize a Hermitian matrix."""

    def __init__(self, msg: str, *, condition: dict[str, float] | None = None) -> None:
        super().__init__(msg)
        self.condition = condition or {}


class UnsupportedSliceError(MapConesError, ValueError):
    pass


class InvalidParamsError(MapConesError, ValueError):
    pass


class NormalizationError(MapConesError, ValueError):
    pass


class DirectionError(MapConesError, ValueError):
    pass


class DecompositionFailure(MapConesError):  # noqa: N818
    """Returned (not raised) by ``decomposable_split`` when the projections stall.

    ``witness`` is the normalised negated residual of the closest pair, a candidate
    PPT matrix with negative overlap against the input.
    """

    def __init__(self, residual: float, iterations: int, witness: Any = None) -> None:  # noqa: ANN401
        super().__init__(f"no decomposition found (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations
        self.witness = witness


class MixingError(MapConesError):
    """Raised when a Monte Carlo ratio does not mix; carries whatever was computed so far."""

    def __init__(self, msg: str, *, partial: dict[str, Any] | None = None) -> None:
        super().__init__(msg)
        self.partial = partial or {}


class ConfigError(MapConesError, ValueError):
    pass
