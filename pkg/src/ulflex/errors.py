"""Exception hierarchy shared by every ulflex module.

Each domain error carries a machine-readable ``code`` and optional detail
fields so the CLI can emit structured error JSON.
"""

from __future__ import annotations

from typing import Any


class FlexError(ValueError):
    """Base class for domain errors."""

    code = "FlexError"

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        out = {"error": self.code, "message": self.message}
        out.update(self.details)
        return out


# EV parameter validation
class NegativePower(FlexError):
    code = "NegativePower"


class NegativeEnergy(FlexError):
    code = "NegativeEnergy"


class InvertedPowerBounds(FlexError):
    code = "InvertedPowerBounds"


class EmptyEnergyWindow(FlexError):
    code = "EmptyEnergyWindow"


# UL parameter validation
class NotConcaveU(FlexError):
    code = "NotConcaveU"


class NotConvexL(FlexError):
    code = "NotConvexL"


class NotIncreasing(FlexError):
    code = "NotIncreasing"


class PropertyIIIViolated(FlexError):
    code = "PropertyIIIViolated"


# shape / combination errors
class WindowMismatch(FlexError):
    code = "WindowMismatch"


class LengthMismatch(FlexError):
    code = "LengthMismatch"


class DimensionCapExceeded(FlexError):
    code = "DimensionCapExceeded"


class LimitExceeded(FlexError):
    code = "LimitExceeded"


class Infeasible(FlexError):
    """Raised when no feasible point exists.

    ``violations`` holds the ordered UL bounds the signal breaks (may be
    empty if the ordered check disagrees with the LP, which the exactness
    oracle records as a counterexample).
    """

    code = "Infeasible"

    def __init__(self, message: str, violations=(), **details: Any) -> None:
        super().__init__(message, **details)
        self.violations = list(violations)

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["violations"] = [v._asdict() for v in self.violations]
        return out


class NumericalFailure(FlexError):
    code = "NumericalFailure"


class SchemaMismatch(FlexError):
    code = "SchemaMismatch"
