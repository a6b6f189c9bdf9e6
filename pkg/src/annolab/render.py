"""Overlay rendering: frames re-encoded as PNG with color-coded boxes
(original annotations green, corrected red by convention)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from PIL import Image, ImageDraw

from .core import AnnotationTrack
from .imaging import FrameSequence, GrayFrame
from .util import round_half_up

DEFAULT_COLORS = ((0, 200, 0), (220, 0, 0), (40, 90, 255), (240, 180, 0))


def box_outline(rect) -> tuple[int, int, int, int]:
    """Inclusive pixel corners of the integer-rounded box footprint."""
    left = round_half_up(rect.x)
    top = round_half_up(rect.y)
    right = round_half_up(rect.x + rect.w) - 1
    bottom = round_half_up(rect.y + rect.h) - 1
    return left, top, right, bottom


def frame_to_image(frame: GrayFrame) -> Image.Image:
    return Image.fromarray(frame.pixels, mode="L").convert("RGB")


def render_frame(frame: GrayFrame, tracks: Sequence[AnnotationTrack], t: int,
                 colors: Sequence[tuple[int, int, int]] = DEFAULT_COLORS) -> Image.Image:
    """Draw the 1-px rectangle of each track visible on frame ``t`` (0-based)."""
    image = frame_to_image(frame)
    draw = ImageDraw.Draw(image)
    for track, color in zip(tracks, colors):
        label = track.labels[t]
        if label.exist:
            draw.rectangle(box_outline(label.rect), outline=color, width=1)
    return image


def render_overlays(seq: FrameSequence, tracks: Sequence[AnnotationTrack],
                    out_dir: str | Path,
                    colors: Sequence[tuple[int, int, int]] = DEFAULT_COLORS) -> list[Path]:
    """Write one overlay PNG per frame; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for track in tracks:
        if len(track) != len(seq):
            raise ValueError(
                f"track {track.video_id!r} has {len(track)} frames, sequence has {len(seq)}")
    written = []
    for t in range(len(seq)):
        image = render_frame(seq.load(t + 1), tracks, t, colors)
        path = out_dir / f"{t + 1:06d}.png"
        image.save(path)
        written.append(path)
    return written
