"""Detection-jitter correction for count series.

A frame whose count differs from the last accepted count is a change
point; its value is replaced by the dominant (most frequent) value of the
surrounding window. The window radius defaults to one third of the frame
rate, and the pass works in place so that later windows see earlier
corrections — this is what makes short multi-frame spikes collapse while
genuine steps (runs longer than the window radius) survive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from . import kernels
from .counting import PROV_SMOOTHED, CountSeries


class TieBreak(Enum):
    PREFER_LAST_VALUE = "prefer-last-value"
    PREFER_SMALLEST = "prefer-smallest"


@dataclass(frozen=True)
class SmoothingParams:
    window_half_length: int
    divisor: int = 3
    tie_break: TieBreak = TieBreak.PREFER_LAST_VALUE

    def __post_init__(self):
        if self.window_half_length < 1:
            raise ValueError(
                f"window_half_length must be >= 1, got {self.window_half_length}"
            )
        if self.divisor < 1:
            raise ValueError(f"divisor must be >= 1, got {self.divisor}")

    @classmethod
    def from_fps(cls, fps, divisor=3, tie_break=TieBreak.PREFER_LAST_VALUE):
        return cls(window_length(fps, divisor), divisor, tie_break)


@dataclass(frozen=True)
class WindowHistogram:
    """Value -> frequency map over one correction window.

    Kept as an explicit type so both readings of the window statistic are
    auditable: ``max_frequency`` (the literal maximum count) and ``mode``
    (the value attaining it, which is what replacement uses).
    """

    entries: dict[int, int]

    def max_frequency(self) -> int:
        if not self.entries:
            raise ValueError("empty histogram")
        return max(self.entries.values())

    def mode(self, last_value: int, tie_break: TieBreak) -> int:
        best = self.max_frequency()
        tied = sorted(v for v, c in self.entries.items() if c == best)
        if tie_break is TieBreak.PREFER_LAST_VALUE and last_value in tied:
            return last_value
        return tied[0]


def window_length(fps, divisor: int = 3) -> int:
    """Correction-window radius: floor(fps / divisor), at least 1."""
    fps = Fraction(fps)
    if fps <= 0:
        raise ValueError(f"fps must be > 0, got {fps}")
    if divisor < 1:
        raise ValueError(f"divisor must be >= 1, got {divisor}")
    return max(1, math.floor(fps / divisor))


def window_histogram(values, center: int, half_length: int) -> WindowHistogram:
    """Frequencies of the values at indices center +- half_length, clamped to bounds."""
    values = np.asarray(values)
    if not 0 <= center < len(values):
        raise ValueError(f"center {center} out of range for length {len(values)}")
    lo = max(0, center - half_length)
    hi = min(len(values) - 1, center + half_length)
    entries: dict[int, int] = {}
    for v in values[lo : hi + 1]:
        v = int(v)
        entries[v] = entries.get(v, 0) + 1
    return WindowHistogram(entries)


def window_mode(hist: WindowHistogram, last_value: int, tie_break: TieBreak) -> int:
    return hist.mode(last_value, tie_break)


def smooth_series(series: CountSeries, params: SmoothingParams) -> CountSeries:
    """Run the jitter-correction pass; replaced frames get Smoothed provenance."""
    if len(series) == 0:
        raise ValueError("empty series")
    prefer_last = params.tie_break is TieBreak.PREFER_LAST_VALUE
    corrected, replaced = kernels.smooth_counts(
        series.counts, params.window_half_length, prefer_last
    )
    prov = series.provenance.copy()
    prov[replaced] = PROV_SMOOTHED
    return CountSeries(corrected, series.fps, prov)
