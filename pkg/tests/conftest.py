import json

import numpy as np
import pytest

from crowdgate.counting import CountSeries
from crowdgate.ingest import GrayFrame


def detections_bytes(counts, fps=9, source_id="cam1", score=0.9, class_id=0):
    """Build a detections file whose per-frame person counts are ``counts``."""
    lines = [json.dumps({"fps": fps, "source_id": source_id})]
    for i, n in enumerate(counts):
        boxes = [
            {"x": 10.0 * k, "y": 5.0, "w": 8.0, "h": 20.0, "score": score, "class_id": class_id}
            for k in range(n)
        ]
        lines.append(
            json.dumps({"frame_index": i, "timestamp_ms": i * 100, "boxes": boxes})
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def gray_frame(values, index=0):
    pixels = np.asarray(values, dtype=np.uint8)
    return GrayFrame(pixels.shape[1], pixels.shape[0], pixels, index)


def series(counts, fps=30):
    return CountSeries.from_counts(counts, fps)


@pytest.fixture
def rng():
    return np.random.default_rng(20240824)
