"""Small result containers shared by the check functions and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field
import math


def fmt17(x: float) -> str:
    """17 significant digits, the CSV number format used everywhere."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class CheckResult:
    """One numeric check: ``value`` compared against ``tolerance``.

    ``kind`` says which side is acceptable: ``"max"`` means value <= tolerance,
    ``"min"`` means value >= tolerance.
    """

    quantity: str
    value: float
    tolerance: float
    kind: str = "max"

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        if self.kind == "max":
            return self.value <= self.tolerance
        return self.value >= self.tolerance

    def to_dict(self) -> dict:
        # tolerances go out as exact decimal strings
        return {
            "quantity": self.quantity,
            "value": float(self.value),
            "tolerance": repr(float(self.tolerance)),
            "pass": bool(self.passed),
        }


@dataclass(frozen=True)
class MarginReport:
    """Signed log-domain margins of a two-sided bound; both should be >= 0."""

    lower: float
    upper: float
    details: dict = field(default_factory=dict)

    @property
    def min_margin(self) -> float:
        return min(self.lower, self.upper)

    def passed(self, tol: float = 1e-10) -> bool:
        return self.min_margin >= -tol
