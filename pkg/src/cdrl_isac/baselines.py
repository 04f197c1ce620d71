"""Fixed-dwell reference schemes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FixedPolicy:
    dwell_fraction: float

    def __post_init__(self):
        if not 0.0 <= self.dwell_fraction <= 1.0:
            raise ValueError("dwell_fraction must lie in [0, 1]")

    @property
    def name(self) -> str:
        return f"fixed-{self.dwell_fraction:g}"

    def dwells(self, live: np.ndarray) -> np.ndarray:
        """Dwell fractions for a live mask: the fixed value where live, 0 elsewhere."""
        return np.where(np.asarray(live, dtype=bool), self.dwell_fraction, 0.0)


@dataclass(frozen=True)
class DwellAllocation:
    dwell_s: tuple[float, ...]  # seconds per live target
    tau_c: float

    @property
    def total_dwell(self) -> float:
        return float(sum(self.dwell_s))


def fixed_dwell_allocation(policy: FixedPolicy, live_targets: int, T0: float) -> DwellAllocation:
    """Every live target gets the same dwell; communication takes what is left (never negative)."""
    if live_targets < 0:
        raise ValueError("live_targets must be >= 0")
    each = policy.dwell_fraction * T0
    return DwellAllocation((each,) * live_targets, max(0.0, T0 - live_targets * each))
