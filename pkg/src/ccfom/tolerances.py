"""Shared tolerance model for every numerical inequality check.

An inequality lhs <= rhs is accepted when

    lhs - rhs <= max(eps_abs, eps_rel * (1 + sum of |term| magnitudes)),

so checks stay meaningful when the participating terms vary over orders of
magnitude along a run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    eps_rel: float = 1e-9
    eps_abs: float = 1e-9

    def __post_init__(self):
        if self.eps_rel <= 0 or self.eps_abs <= 0:
            raise ValueError("tolerances must be positive")

    def bound(self, *magnitudes: float) -> float:
        """Tolerance for a check whose terms have the given magnitudes.

        Non-finite magnitudes (from vacuous records) are skipped.
        """
        scale = 1.0
        for m in magnitudes:
            if math.isfinite(m):
                scale += abs(m)
        return max(self.eps_abs, self.eps_rel * scale)


DEFAULT_TOLERANCES = Tolerances()
