"""Count-precision evaluation and synthetic jitter generation.

The headline metric is a count-level average precision: the ratio of
frame-count-weighted detected objects to true objects. Grouped by distinct
count value it reads sum_c m1(c)*c / sum_c m2(c)*c where m1(c)/m2(c) are
the numbers of detected/true frames whose count is c; algebraically that
equals total detected objects over total true objects, and both forms are
computed and cross-checked on every call. The metric can exceed 1 under
over-detection, so a stricter matched-frame variant is exposed alongside
it for diagnostics.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .counting import CountSeries

_CROSSCHECK_TOL = 1e-12


@dataclass(frozen=True)
class JitterSpec:
    """Synthetic detection-instability model: short random count spikes."""

    spike_probability: float
    max_spike_magnitude: int
    max_spike_run: int
    rng_seed: int

    def __post_init__(self):
        if not 0.0 <= self.spike_probability <= 1.0:
            raise ValueError(f"spike_probability must be in [0, 1], got {self.spike_probability}")
        if self.max_spike_magnitude < 1:
            raise ValueError(f"max_spike_magnitude must be >= 1, got {self.max_spike_magnitude}")
        if self.max_spike_run < 1:
            raise ValueError(f"max_spike_run must be >= 1, got {self.max_spike_run}")


@dataclass(frozen=True)
class EvalReport:
    """Raw-vs-smoothed comparison against one ground-truth series."""

    ap_d_raw: float
    ap_d_smoothed: float
    per_count_table: dict[int, tuple[int, int]]
    total_detected_objects: int
    total_true_objects: int


def _as_counts(series) -> np.ndarray:
    if isinstance(series, CountSeries):
        return series.counts
    return np.asarray(series, dtype=np.int64)


def ap_d(detected, truth) -> float:
    """Count-level average precision of ``detected`` against ``truth``.

    Both the grouped-by-value form and the plain totals ratio are computed;
    a disagreement beyond 1e-12 means a bug and raises.
    """
    det = _as_counts(detected)
    tru = _as_counts(truth)
    if len(det) != len(tru):
        raise ValueError(f"length mismatch: detected {len(det)}, truth {len(tru)}")
    total_true = int(tru.sum())
    if total_true == 0:
        raise ValueError("truth series has no objects (zero denominator)")
    total_det = int(det.sum())
    grouped_num = sum(c * m for c, m in Counter(det.tolist()).items())
    grouped_den = sum(c * m for c, m in Counter(tru.tolist()).items())
    grouped = grouped_num / grouped_den
    totals = total_det / total_true
    if abs(grouped - totals) > _CROSSCHECK_TOL:
        raise AssertionError(
            f"metric self-check failed: grouped {grouped!r} vs totals {totals!r}"
        )
    return totals


def matched_ap_d(detected, truth) -> float:
    """Strict variant: only frames whose detected count equals the true count score."""
    det = _as_counts(detected)
    tru = _as_counts(truth)
    if len(det) != len(tru):
        raise ValueError(f"length mismatch: detected {len(det)}, truth {len(tru)}")
    total_true = int(tru.sum())
    if total_true == 0:
        raise ValueError("truth series has no objects (zero denominator)")
    matched = int(det[det == tru].sum())
    return matched / total_true


def per_count_table(detected, truth) -> dict[int, tuple[int, int]]:
    """count value -> (detected frames at that count, true frames at that count)."""
    det = Counter(_as_counts(detected).tolist())
    tru = Counter(_as_counts(truth).tolist())
    return {
        c: (det.get(c, 0), tru.get(c, 0)) for c in sorted(det.keys() | tru.keys())
    }


def evaluate(truth, raw, smoothed) -> EvalReport:
    return EvalReport(
        ap_d_raw=ap_d(raw, truth),
        ap_d_smoothed=ap_d(smoothed, truth),
        per_count_table=per_count_table(smoothed, truth),
        total_detected_objects=int(_as_counts(smoothed).sum()),
        total_true_objects=int(_as_counts(truth).sum()),
    )


def compare_methods(truth, candidates: dict) -> dict[str, float]:
    """One metric value per named candidate series, in insertion order."""
    results = {}
    for name, series in candidates.items():
        try:
            results[name] = ap_d(series, truth)
        except ValueError as exc:
            raise ValueError(f"candidate {name!r}: {exc}") from exc
    return results


def render_table(results: dict[str, dict[str, float]]) -> str:
    """Plain-text table, methods as rows and scenes as columns."""
    scenes: list[str] = []
    for per_scene in results.values():
        for scene in per_scene:
            if scene not in scenes:
                scenes.append(scene)
    method_width = max([len("method")] + [len(m) for m in results])
    widths = [max(len(s), 7) for s in scenes]
    lines = [
        "  ".join(
            ["method".ljust(method_width)]
            + [s.rjust(w) for s, w in zip(scenes, widths)]
        )
    ]
    for method, per_scene in results.items():
        cells = []
        for scene, w in zip(scenes, widths):
            value = per_scene.get(scene)
            cells.append(("-" if value is None else f"{value:.4f}").rjust(w))
        lines.append("  ".join([method.ljust(method_width)] + cells))
    return "".join(line + "\n" for line in lines)


def report_to_json(results: dict[str, dict[str, float]]) -> str:
    return json.dumps(results, indent=2) + "\n"


def generate_synthetic(
    truth_profile, jitter: JitterSpec, fps=Fraction(30)
) -> tuple[CountSeries, CountSeries]:
    """Build a piecewise-constant truth series plus a jittered copy.

    ``truth_profile`` is a sequence of (run_length, count) pairs. Each frame
    independently starts a spike with the given probability; a spike adds a
    uniform +-{1..max_spike_magnitude} offset over a uniform 1..max_spike_run
    frame run (clamped at the series end), and the result clamps at zero.
    Deterministic for a fixed seed.
    """
    pieces = [(int(r), int(c)) for r, c in truth_profile]
    if not pieces or sum(r for r, _ in pieces) < 1:
        raise ValueError("truth profile must cover at least one frame")
    for run, count in pieces:
        if run < 1:
            raise ValueError(f"run length must be >= 1, got {run}")
        if count < 0:
            raise ValueError(f"count must be >= 0, got {count}")
    truth = np.concatenate([np.full(run, count, dtype=np.int64) for run, count in pieces])
    rng = np.random.default_rng(jitter.rng_seed)
    jittered = truth.astype(np.int64).copy()
    n = len(truth)
    for i in range(n):
        if rng.random() >= jitter.spike_probability:
            continue
        magnitude = int(rng.integers(1, jitter.max_spike_magnitude + 1))
        sign = 1 if rng.integers(0, 2) == 1 else -1
        run = int(rng.integers(1, jitter.max_spike_run + 1))
        jittered[i : i + run] += sign * magnitude
    np.maximum(jittered, 0, out=jittered)
    return (
        CountSeries.from_counts(truth, fps),
        CountSeries.from_counts(jittered, fps),
    )
