"""Shared synthetic-video helpers: static textured scenes with a bright
blob target, written as PGM frame directories."""

from pathlib import Path

import numpy as np
import pytest

from annolab.core import AnnotationTrack, BoundingBox, FrameLabel
from annolab.imaging import write_pgm


def smooth_noise(width, height, cell, rng, lo=20.0, hi=90.0):
    """Bilinearly upsampled coarse random field (texture with ~cell-px grain)."""
    gw = width // cell + 2
    gh = height // cell + 2
    grid = rng.uniform(lo, hi, size=(gh, gw))
    xs = np.arange(width) / cell
    ys = np.arange(height) / cell
    x0 = xs.astype(int)
    y0 = ys.astype(int)
    fx = (xs - x0)[None, :]
    fy = (ys - y0)[:, None]
    a = grid[np.ix_(y0, x0)]
    b = grid[np.ix_(y0, x0 + 1)]
    c = grid[np.ix_(y0 + 1, x0)]
    d = grid[np.ix_(y0 + 1, x0 + 1)]
    return (a * (1 - fx) * (1 - fy) + b * fx * (1 - fy)
            + c * (1 - fx) * fy + d * fx * fy)


def blob(width, height, cx, cy, sigma, amplitude=150.0):
    x = np.arange(width)[None, :]
    y = np.arange(height)[:, None]
    return amplitude * np.exp(-(((x - cx) ** 2) + ((y - cy) ** 2)) / (2 * sigma ** 2))


def static_scene(out_dir: Path, n_frames: int, width=200, height=150,
                 center=(100.0, 75.0), box_size=32.0, seed=0):
    """Write a static scene (textured background + bright blob at ``center``)
    and return the true target box.

    The texture is fine-grained and weak relative to the blob so that the
    correlation landscape is blob-dominated with a short-range background
    gradient: matches beyond the search radius saturate toward the true
    position instead of locking onto background coincidences.
    """
    rng = np.random.default_rng(seed)
    image = smooth_noise(width, height, cell=6, rng=rng, lo=50.0, hi=70.0)
    image = image + blob(width, height, center[0], center[1], sigma=box_size / 2.0,
                         amplitude=170.0)
    frame = np.clip(image, 0, 255).astype(np.uint8)
    out_dir.mkdir(parents=True, exist_ok=True)
    for t in range(1, n_frames + 1):
        write_pgm(out_dir / f"{t:06d}.pgm", frame)
    return BoundingBox.from_center(center[0], center[1], box_size, box_size)


def perfect_track(box: BoundingBox, n_frames: int, video_id="synthetic",
                  fps=30.0) -> AnnotationTrack:
    return AnnotationTrack(video_id, (FrameLabel.visible(box),) * n_frames, fps=fps)


def shifted_track(track: AnnotationTrack, shifts: dict[int, tuple[float, float]]) -> AnnotationTrack:
    """Corrupt selected frames (0-based) by translating their boxes."""
    labels = list(track.labels)
    for t, (dx, dy) in shifts.items():
        rect = labels[t].rect
        labels[t] = FrameLabel.visible(
            BoundingBox(rect.x + dx, rect.y + dy, rect.w, rect.h))
    return AnnotationTrack(track.video_id, tuple(labels), fps=track.fps)


@pytest.fixture
def scene_dir(tmp_path):
    return tmp_path / "frames"


def pytest_runtest_logreport(report):
    """One pass/fail line per acceptance criterion."""
    if "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        status = "PASS" if report.passed else "FAIL"
        print(f"\nacceptance {status}: {name}")
    elif report.when == "setup" and report.skipped:
        print(f"\nacceptance SKIP: {name}")
