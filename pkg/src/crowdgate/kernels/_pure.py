"""Pure-Python smoothing kernel; reference implementation and import-time fallback."""

from collections import Counter

import numpy as np


def smooth_counts(values, half_length, prefer_last):
    """Single in-place left-to-right jitter-correction pass.

    Walks the series keeping the last accepted value; whenever the current
    value differs, it is replaced by the most frequent value in the
    ``half_length``-radius window around it (the window reads values already
    corrected earlier in the pass). Ties go to the last accepted value when
    ``prefer_last`` and it is among the tied values, otherwise to the
    smallest tied value.

    Returns (corrected int64 array, boolean mask of replaced positions).
    """
    buf = np.asarray(values, dtype=np.int64).copy()
    n = len(buf)
    replaced = np.zeros(n, dtype=bool)
    if n == 0:
        raise ValueError("empty series")
    if half_length < 1:
        raise ValueError(f"half_length must be >= 1, got {half_length}")
    last = int(buf[0])
    for x in range(1, n):
        value = int(buf[x])
        if value == last:
            continue
        lo = max(0, x - half_length)
        hi = min(n - 1, x + half_length)
        hist = Counter(int(v) for v in buf[lo : hi + 1])
        best_freq = max(hist.values())
        tied = [v for v, c in hist.items() if c == best_freq]
        if prefer_last and last in tied:
            mode = last
        else:
            mode = min(tied)
        if mode != value:
            buf[x] = mode
            replaced[x] = True
        last = int(buf[x])
    return buf, replaced
