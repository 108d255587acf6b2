"""Parsing and normalization of detector output and raw grayscale frames.

Two on-disk formats are handled here:

* Detections file: UTF-8, LF-terminated JSON lines. The first non-blank
  line is a header object ``{"fps": <number or "num/den">, "source_id": s}``;
  every following non-blank line is one frame record with its bounding boxes.
* Raw gray container: 16-byte header (magic ``CGRY``, little-endian u32
  width, height, frame count) followed by ``frame_count * width * height``
  bytes of row-major 8-bit intensities. FFmpeg can emit this layout from
  any video via ``-f rawvideo -pix_fmt gray`` plus a prepended header.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import InputFormatError

GRAY_MAGIC = b"CGRY"
_GRAY_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned detector box in pixel coordinates (x, y = top-left corner)."""

    x: float
    y: float
    w: float
    h: float
    score: float
    class_id: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box width/height must be > 0, got w={self.w}, h={self.h}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class FrameDetections:
    """All detector boxes for one frame."""

    frame_index: int
    timestamp_ms: int
    boxes: tuple[BoundingBox, ...]

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be >= 0, got {self.frame_index}")
        if self.timestamp_ms < 0:
            raise ValueError(f"timestamp_ms must be >= 0, got {self.timestamp_ms}")


@dataclass(frozen=True)
class StreamMeta:
    """Stream-level metadata; ``gaps`` lists (first, last) missing index ranges."""

    fps: Fraction
    frame_count: int
    source_id: str
    gaps: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError(f"fps must be > 0, got {self.fps}")


@dataclass(frozen=True)
class GrayFrame:
    """One 8-bit grayscale frame; ``pixels`` has shape (height, width)."""

    width: int
    height: int
    pixels: np.ndarray
    frame_index: int

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width):
            raise ValueError(
                f"pixel buffer shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}"
            )


def parse_fps(value) -> Fraction:
    """Accept a JSON number or a "num/den" string; reject non-positive rates."""
    if isinstance(value, str):
        try:
            fps = Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise InputFormatError(f"cannot parse fps {value!r}") from exc
    elif isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InputFormatError(f"fps must be a number or 'num/den' string, got {value!r}")
    else:
        fps = Fraction(str(value))
    if fps <= 0:
        raise InputFormatError(f"fps must be > 0, got {value!r}")
    return fps


def format_fps(fps: Fraction):
    """Inverse of parse_fps: integer rates as plain ints, others as num/den."""
    if fps.denominator == 1:
        return fps.numerator
    return f"{fps.numerator}/{fps.denominator}"


def _parse_box(raw, line):
    try:
        return BoundingBox(
            x=float(raw["x"]),
            y=float(raw["y"]),
            w=float(raw["w"]),
            h=float(raw["h"]),
            score=float(raw["score"]),
            class_id=int(raw["class_id"]),
        )
    except KeyError as exc:
        raise InputFormatError(f"box missing field {exc.args[0]!r}", line=line) from exc
    except (TypeError, ValueError) as exc:
        raise InputFormatError(f"bad box: {exc}", line=line) from exc


def parse_detections(source) -> tuple[list[FrameDetections], StreamMeta]:
    """Parse a detections stream into frame records plus stream metadata.

    ``source`` may be a bytes object, a text/binary file object, or a path.
    Records must arrive in strictly increasing frame_index order; duplicates
    are rejected, missing indices are tolerated and reported as gaps.
    """
    text = _as_text(source)
    header = None
    frames: list[FrameDetections] = []
    last_index = None
    gaps: list[tuple[int, int]] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise InputFormatError(f"invalid JSON: {exc.msg}", line=line_no) from exc
        if header is None:
            if "fps" not in obj:
                raise InputFormatError("header missing 'fps'", line=line_no)
            header = (parse_fps(obj["fps"]), str(obj.get("source_id", "")))
            continue
        try:
            frame_index = int(obj["frame_index"])
            timestamp_ms = int(obj["timestamp_ms"])
            raw_boxes = obj["boxes"]
        except KeyError as exc:
            raise InputFormatError(f"record missing field {exc.args[0]!r}", line=line_no) from exc
        boxes = tuple(_parse_box(b, line_no) for b in raw_boxes)
        try:
            record = FrameDetections(frame_index, timestamp_ms, boxes)
        except ValueError as exc:
            raise InputFormatError(str(exc), line=line_no) from exc
        if last_index is not None:
            if frame_index == last_index:
                raise InputFormatError(
                    f"duplicate frame_index {frame_index}", line=line_no
                )
            if frame_index < last_index:
                raise InputFormatError(
                    f"non-monotone frame_index {frame_index} after {last_index}",
                    line=line_no,
                )
            if frame_index > last_index + 1:
                gaps.append((last_index + 1, frame_index - 1))
        last_index = frame_index
        frames.append(record)
    if header is None:
        raise InputFormatError("empty detections stream (no header)")
    meta = StreamMeta(
        fps=header[0],
        frame_count=len(frames),
        source_id=header[1],
        gaps=tuple(gaps),
    )
    return frames, meta


def serialize_detections(frames, meta: StreamMeta) -> bytes:
    """Write frames + metadata back to the detections file format."""
    out = io.StringIO()
    json.dump(
        {"fps": format_fps(meta.fps), "source_id": meta.source_id},
        out,
        separators=(",", ":"),
    )
    out.write("\n")
    for frame in frames:
        record = {
            "frame_index": frame.frame_index,
            "timestamp_ms": frame.timestamp_ms,
            "boxes": [
                {
                    "x": b.x,
                    "y": b.y,
                    "w": b.w,
                    "h": b.h,
                    "score": b.score,
                    "class_id": b.class_id,
                }
                for b in frame.boxes
            ],
        }
        json.dump(record, out, separators=(",", ":"))
        out.write("\n")
    return out.getvalue().encode("utf-8")


def load_gray_frames(source) -> list[GrayFrame]:
    """Read a CGRY container into a list of GrayFrames."""
    data = _as_bytes(source)
    if len(data) < _GRAY_HEADER.size:
        raise InputFormatError("gray container shorter than its 16-byte header")
    magic, width, height, count = _GRAY_HEADER.unpack_from(data)
    if magic != GRAY_MAGIC:
        raise InputFormatError(f"bad magic {magic!r}, expected {GRAY_MAGIC!r}")
    if width == 0 or height == 0:
        raise InputFormatError(f"zero frame dimension {width}x{height}")
    frame_size = width * height
    expected = _GRAY_HEADER.size + count * frame_size
    if len(data) < expected:
        raise InputFormatError(
            f"truncated payload: header declares {count} frames of {frame_size} bytes "
            f"({expected} total), got {len(data)} bytes"
        )
    if len(data) > expected:
        raise InputFormatError(f"{len(data) - expected} trailing bytes after last frame")
    frames = []
    offset = _GRAY_HEADER.size
    for index in range(count):
        pixels = np.frombuffer(
            data, dtype=np.uint8, count=frame_size, offset=offset
        ).reshape(height, width)
        frames.append(GrayFrame(width, height, pixels, index))
        offset += frame_size
    return frames


def save_gray_frames(frames) -> bytes:
    """Write GrayFrames out as a CGRY container (inverse of load_gray_frames)."""
    if not frames:
        raise ValueError("cannot serialize an empty frame list")
    width, height = frames[0].width, frames[0].height
    out = bytearray(_GRAY_HEADER.pack(GRAY_MAGIC, width, height, len(frames)))
    for frame in frames:
        if (frame.width, frame.height) != (width, height):
            raise ValueError(
                f"frame {frame.frame_index} is {frame.width}x{frame.height}, "
                f"stream is {width}x{height}"
            )
        out += frame.pixels.tobytes()
    return bytes(out)


def _as_text(source) -> str:
    if isinstance(source, str):
        with open(source, "rb") as fh:
            return fh.read().decode("utf-8")
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8")
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _as_bytes(source) -> bytes:
    if isinstance(source, str):
        with open(source, "rb") as fh:
            return fh.read()
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    return source.read()
