# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled smoothing kernel; mirrors kernels._pure.smooth_counts exactly."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def smooth_counts(values, int half_length, bint prefer_last):
    """See crowdgate.kernels._pure.smooth_counts for the contract."""
    cdef cnp.ndarray[cnp.int64_t, ndim=1] buf = np.ascontiguousarray(
        values, dtype=np.int64
    ).copy()
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] replaced = np.zeros(buf.shape[0], dtype=np.uint8)
    cdef Py_ssize_t n = buf.shape[0]
    if n == 0:
        raise ValueError("empty series")
    if half_length < 1:
        raise ValueError(f"half_length must be >= 1, got {half_length}")

    cdef cnp.int64_t last = buf[0]
    cdef cnp.int64_t value, v, mode, best_val
    cdef Py_ssize_t x, lo, hi, i, j
    cdef int c, best_freq, last_freq
    cdef bint dup

    for x in range(1, n):
        value = buf[x]
        if value == last:
            continue
        lo = x - half_length
        if lo < 0:
            lo = 0
        hi = x + half_length
        if hi > n - 1:
            hi = n - 1
        # Window is small (2*half_length+1): find the mode by scanning each
        # distinct value's occurrences rather than building a hash map.
        best_val = 0
        best_freq = 0
        last_freq = 0
        for i in range(lo, hi + 1):
            v = buf[i]
            dup = False
            for j in range(lo, i):
                if buf[j] == v:
                    dup = True
                    break
            if dup:
                continue
            c = 0
            for j in range(i, hi + 1):
                if buf[j] == v:
                    c += 1
            if c > best_freq or (c == best_freq and v < best_val):
                best_val = v
                best_freq = c
            if v == last:
                last_freq = c
        if prefer_last and last_freq == best_freq:
            mode = last
        else:
            mode = best_val
        if mode != value:
            buf[x] = mode
            replaced[x] = 1
        last = buf[x]
    return np.asarray(buf), np.asarray(replaced).astype(bool)
