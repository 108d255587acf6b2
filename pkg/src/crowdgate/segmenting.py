"""Abnormal-count segment extraction and cut-list emission.

Finds maximal runs where the (smoothed) count strictly exceeds the
abnormal threshold, merges runs separated by short below-threshold gaps,
drops runs that are too short, and renders the result both as a JSON
report and as an FFmpeg command sheet for external re-encoding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .counting import CountSeries


@dataclass(frozen=True)
class Segment:
    """Contiguous frame range (inclusive) with its timing and count summary.

    ``end_ms`` is end-exclusive time: (end_frame + 1) / fps, so adjacent
    segments tile without overlap.
    """

    start_frame: int
    end_frame: int
    start_ms: int
    end_ms: int
    peak_count: int
    mean_count: float

    def __post_init__(self):
        if self.start_frame > self.end_frame:
            raise ValueError(f"start_frame {self.start_frame} > end_frame {self.end_frame}")
        if self.start_ms > self.end_ms:
            raise ValueError(f"start_ms {self.start_ms} > end_ms {self.end_ms}")
        if self.peak_count < self.mean_count:
            raise ValueError(
                f"peak_count {self.peak_count} < mean_count {self.mean_count}"
            )


@dataclass(frozen=True)
class SegmentPolicy:
    """min_duration/merge_gap default to the smoothing window radius when None."""

    abnormal_threshold: int
    min_duration_frames: int | None = None
    merge_gap_frames: int | None = None

    def __post_init__(self):
        if self.abnormal_threshold < 1:
            raise ValueError(
                f"abnormal_threshold must be >= 1, got {self.abnormal_threshold}"
            )

    def resolved(self, window_half_length: int) -> "SegmentPolicy":
        return SegmentPolicy(
            abnormal_threshold=self.abnormal_threshold,
            min_duration_frames=(
                self.min_duration_frames
                if self.min_duration_frames is not None
                else window_half_length
            ),
            merge_gap_frames=(
                self.merge_gap_frames
                if self.merge_gap_frames is not None
                else window_half_length
            ),
        )


def frame_to_ms(frame: int, fps: Fraction) -> int:
    """Frame start time in integer milliseconds, ties rounded up (deterministic)."""
    return int(Fraction(frame) * 1000 / fps + Fraction(1, 2))


def extract_segments(series: CountSeries, policy: SegmentPolicy) -> list[Segment]:
    """Maximal above-threshold runs, gap-merged and duration-filtered."""
    if len(series) == 0:
        raise ValueError("empty series")
    min_duration = policy.min_duration_frames if policy.min_duration_frames is not None else 0
    merge_gap = policy.merge_gap_frames if policy.merge_gap_frames is not None else 0

    above = series.counts > policy.abnormal_threshold
    runs: list[list[int]] = []
    start = None
    for i, flag in enumerate(above):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append([start, i - 1])
            start = None
    if start is not None:
        runs.append([start, len(series) - 1])

    merged: list[list[int]] = []
    for run in runs:
        if merged and run[0] - merged[-1][1] - 1 <= merge_gap:
            merged[-1][1] = run[1]
        else:
            merged.append(run)

    segments = []
    for s, e in merged:
        if e - s + 1 < min_duration:
            continue
        window = series.counts[s : e + 1]
        segments.append(
            Segment(
                start_frame=s,
                end_frame=e,
                start_ms=frame_to_ms(s, series.fps),
                end_ms=frame_to_ms(e + 1, series.fps),
                peak_count=int(window.max()),
                mean_count=float(window.mean()),
            )
        )
    return segments


def segment_report(segments) -> list[dict]:
    return [
        {
            "start_frame": seg.start_frame,
            "end_frame": seg.end_frame,
            "start_ms": seg.start_ms,
            "end_ms": seg.end_ms,
            "peak_count": seg.peak_count,
            "mean_count": seg.mean_count,
        }
        for seg in segments
    ]


def emit_cutlist(segments, source_path: str) -> tuple[str, str]:
    """Render (JSON segment report, FFmpeg trim command sheet).

    Trim windows use millisecond-precision seconds; the end bound is
    end-exclusive, matching Segment.end_ms.
    """
    ordered = list(segments)
    for prev, curr in zip(ordered, ordered[1:]):
        if curr.start_frame <= prev.end_frame:
            raise ValueError(
                f"overlapping segments: {prev.start_frame}..{prev.end_frame} and "
                f"{curr.start_frame}..{curr.end_frame}"
            )
    report = json.dumps(segment_report(ordered), indent=2) + "\n"
    lines = []
    for k, seg in enumerate(ordered):
        start_s = seg.start_ms / 1000.0
        end_s = seg.end_ms / 1000.0
        lines.append(
            f"ffmpeg -i {source_path} -ss {start_s:.3f} -to {end_s:.3f} "
            f"-c copy {source_path}_seg{k}.mp4"
        )
    sheet = "".join(line + "\n" for line in lines)
    return report, sheet
