"""Annotation tracks, detector outputs, and their JSON file formats.

All types are immutable value objects; instances can be shared freely
between threads. File writers are deterministic: the same value always
serializes to the same bytes (fixed key order, shortest round-trip
floats), and ``parse(write(x)) == x`` for every valid ``x``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass


class ParseError(ValueError):
    """Input bytes are not syntactically valid for the expected format."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(ValueError):
    """Parsed or constructed content violates a data-model invariant."""


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)


def _as_number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{what} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ValidationError(f"{what} must be finite, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in image coordinates, origin at top-left, real-valued."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, _as_number(getattr(self, name), f"box {name}"))
        _require(self.w > 0 and self.h > 0, f"box size must be positive, got {self.w}x{self.h}")

    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def area(self) -> float:
        return self.w * self.h

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BoundingBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)


@dataclass(frozen=True)
class FrameLabel:
    """Ground truth for one frame: visibility flag plus box iff visible."""

    exist: int
    rect: BoundingBox | None

    def __post_init__(self):
        if isinstance(self.exist, bool):
            object.__setattr__(self, "exist", int(self.exist))
        _require(self.exist in (0, 1), f"exist flag must be 0 or 1, got {self.exist!r}")
        if self.exist == 1:
            _require(self.rect is not None, "visible frame must carry a rect")
        else:
            _require(self.rect is None, "invisible frame must not carry a rect")

    @classmethod
    def visible(cls, rect: BoundingBox) -> "FrameLabel":
        return cls(1, rect)

    @classmethod
    def hidden(cls) -> "FrameLabel":
        return cls(0, None)


@dataclass(frozen=True)
class AnnotationTrack:
    """Per-video sequence of frame labels. Frame arrays are 0-based internally;
    messages and docs use 1-based frame numbers."""

    video_id: str
    labels: tuple[FrameLabel, ...]
    fps: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        _require(len(self.labels) >= 1, "track must contain at least one frame")
        fps = _as_number(self.fps, "fps")
        _require(fps > 0, f"fps must be positive, got {fps}")
        object.__setattr__(self, "fps", fps)

    def __len__(self) -> int:
        return len(self.labels)

    def visible_indices(self) -> list[int]:
        return [t for t, lab in enumerate(self.labels) if lab.exist == 1]


@dataclass(frozen=True)
class Detection:
    """Single detector output: box plus objectness score."""

    rect: BoundingBox
    score: float

    def __post_init__(self):
        score = _as_number(self.score, "score")
        _require(0.0 <= score <= 1.0, f"score must lie in [0, 1], got {score}")
        object.__setattr__(self, "score", score)


@dataclass(frozen=True)
class DetectionSet:
    """Per-frame lists of detections for one video (lists may be empty)."""

    video_id: str
    frames: tuple[tuple[Detection, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(tuple(f) for f in self.frames))

    def __len__(self) -> int:
        return len(self.frames)


def _load_json(data: bytes | str):
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not valid UTF-8: {exc}") from exc
    try:
        return json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc


def _parse_rect(raw, frame_no: int) -> BoundingBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise ValidationError(f"frame {frame_no}: rect must be [x, y, w, h], got {raw!r}")
    try:
        return BoundingBox(*raw)
    except ValidationError as exc:
        raise ValidationError(f"frame {frame_no}: {exc}") from exc


def parse_annotations(data: bytes | str) -> AnnotationTrack:
    """Parse an annotation file.

    Schema: ``{"video_id": str, "fps": number, "exist": [0|1, ...],
    "gt_rect": [[x, y, w, h] | null, ...]}`` with equal array lengths.
    ``video_id`` and ``fps`` may be omitted (default ``""`` / 30).
    Placeholder rects on invisible frames are normalized to null.
    """
    obj = _load_json(data)
    if not isinstance(obj, dict):
        raise ParseError("annotation file must be a JSON object")
    for key in ("exist", "gt_rect"):
        if key not in obj:
            raise ParseError(f"annotation file missing {key!r} array")
        if not isinstance(obj[key], list):
            raise ParseError(f"{key!r} must be an array")
    exist, rects = obj["exist"], obj["gt_rect"]
    _require(len(exist) == len(rects),
             f"exist ({len(exist)}) and gt_rect ({len(rects)}) lengths differ")
    _require(len(exist) >= 1, "track must contain at least one frame")
    video_id = obj.get("video_id", "")
    if not isinstance(video_id, str):
        raise ParseError("video_id must be a string")
    fps = obj.get("fps", 30.0)

    labels = []
    for i, (flag, raw) in enumerate(zip(exist, rects)):
        if isinstance(flag, bool) or flag not in (0, 1):
            raise ValidationError(f"frame {i + 1}: exist flag must be 0 or 1, got {flag!r}")
        if flag == 1:
            if raw is None:
                raise ValidationError(f"frame {i + 1}: visible frame has null rect")
            labels.append(FrameLabel.visible(_parse_rect(raw, i + 1)))
        else:
            labels.append(FrameLabel.hidden())
    return AnnotationTrack(video_id=video_id, labels=tuple(labels), fps=fps)


def write_annotations(track: AnnotationTrack) -> bytes:
    """Serialize a track to canonical bytes (inverse of :func:`parse_annotations`)."""
    doc = {
        "video_id": track.video_id,
        "fps": track.fps,
        "exist": [lab.exist for lab in track.labels],
        "gt_rect": [lab.rect.as_list() if lab.rect else None for lab in track.labels],
    }
    return (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")


def parse_detections(data: bytes | str) -> DetectionSet:
    """Parse a detection file.

    Schema: ``{"video_id": str, "frames": [[{"rect": [x, y, w, h],
    "score": s}, ...], ...]}``; frame lists may be empty.
    """
    obj = _load_json(data)
    if not isinstance(obj, dict):
        raise ParseError("detection file must be a JSON object")
    if "frames" not in obj or not isinstance(obj["frames"], list):
        raise ParseError("detection file missing 'frames' array")
    video_id = obj.get("video_id", "")
    if not isinstance(video_id, str):
        raise ParseError("video_id must be a string")

    frames = []
    for i, frame in enumerate(obj["frames"]):
        if not isinstance(frame, list):
            raise ParseError(f"frame {i + 1}: detections must form an array")
        dets = []
        for raw in frame:
            if not isinstance(raw, dict) or "rect" not in raw or "score" not in raw:
                raise ParseError(f"frame {i + 1}: detection must carry rect and score")
            try:
                dets.append(Detection(_parse_rect(raw["rect"], i + 1), raw["score"]))
            except ValidationError as exc:
                msg = str(exc)
                if not msg.startswith("frame "):
                    msg = f"frame {i + 1}: {msg}"
                raise ValidationError(msg) from exc
        frames.append(tuple(dets))
    return DetectionSet(video_id=video_id, frames=tuple(frames))


def write_detections(dets: DetectionSet) -> bytes:
    """Serialize a detection set to canonical bytes."""
    doc = {
        "video_id": dets.video_id,
        "frames": [
            [{"rect": d.rect.as_list(), "score": d.score} for d in frame]
            for frame in dets.frames
        ],
    }
    return (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")
