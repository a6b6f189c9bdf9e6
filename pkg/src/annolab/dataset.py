"""Dataset tree conventions.

A dataset root holds one directory per video::

    <root>/<video_id>/label.json     annotation track
    <root>/<video_id>/frames/*.pgm   optional frame files

Corrected or corrupted annotation sets mirror the same tree. Detection
sets live in a flat directory of ``<video_id>.json`` files.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from .core import (AnnotationTrack, DetectionSet, parse_annotations,
                   parse_detections, write_annotations)
from .imaging import FrameSequence

LABEL_FILE = "label.json"
FRAMES_DIR = "frames"


def discover_videos(root: str | Path) -> list[str]:
    """Sorted ids of all videos under ``root`` that carry a label file."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} does not exist")
    return sorted(p.name for p in root.iterdir() if (p / LABEL_FILE).is_file())


def label_path(root: str | Path, video_id: str) -> Path:
    return Path(root) / video_id / LABEL_FILE


def frames_path(root: str | Path, video_id: str) -> Path:
    return Path(root) / video_id / FRAMES_DIR


def load_track(root: str | Path, video_id: str) -> AnnotationTrack:
    track = parse_annotations(label_path(root, video_id).read_bytes())
    if not track.video_id:
        track = replace(track, video_id=video_id)
    return track


def save_track(root: str | Path, video_id: str, track: AnnotationTrack) -> Path:
    path = label_path(root, video_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(write_annotations(track))
    return path


def frame_sequence(root: str | Path, video_id: str) -> FrameSequence:
    return FrameSequence(frames_path(root, video_id))


def has_frames(root: str | Path, video_id: str) -> bool:
    path = frames_path(root, video_id)
    return path.is_dir() and any(
        p.suffix.lower() in (".pgm", ".png") for p in path.iterdir())


def detections_path(root: str | Path, video_id: str) -> Path:
    return Path(root) / f"{video_id}.json"


def load_detections(root: str | Path, video_id: str) -> DetectionSet:
    dets = parse_detections(detections_path(root, video_id).read_bytes())
    if not dets.video_id:
        dets = replace(dets, video_id=video_id)
    return dets
