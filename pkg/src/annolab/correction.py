"""Semi-automatic annotation correction via template matching.

For each maximal run of visible frames, the box annotated on frame k is
searched on frame k+1 around the annotated center there; the resulting
per-frame displacements are accumulated, a least-squares line is fitted to
the cumulative sum to absorb matcher drift, and the detrended residual is
added to each annotated center. The whole pass runs a configurable number
of times (default 2) at the same search radius: a first pass pulls gross
errors beyond the search range partway in, a second pass finishes them.

Sign convention: the measured displacement is matched center minus
annotated center on the later frame, so the residual is added (not
subtracted) to correct a center. A one-frame annotation error of +s
therefore shows up as a -s step followed by a +s step in the displacement
sequence. Box sizes and visibility flags are never modified.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .core import AnnotationTrack, BoundingBox, FrameLabel
from .imaging import (DegeneratePatchError, FrameSequence,
                      MatchInfeasibleError, extract_patch, zncc_match)


@dataclass(frozen=True)
class CorrectionConfig:
    radius: int = 20
    passes: int = 2
    min_segment: int = 3

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")
        if self.passes < 1:
            raise ValueError(f"passes must be >= 1, got {self.passes}")
        # 2 points pin a line exactly; 3 leave a residual worth applying
        if self.min_segment < 3:
            raise ValueError(f"min_segment must be >= 3, got {self.min_segment}")


@dataclass
class SegmentChain:
    """Measurements for one visible segment: per-frame displacement u,
    cumulative sum, fitted per-axis trend (slope, intercept), residuals."""

    start: int  # 0-based inclusive
    end: int    # 0-based inclusive
    u: np.ndarray           # (n, 2) int
    cumulative: np.ndarray  # (n, 2) int
    trend: np.ndarray       # (2, 2): [[slope_x, intercept_x], [slope_y, intercept_y]]
    residuals: np.ndarray   # (n, 2) float
    flags: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "start": self.start + 1,  # 1-based in reports
            "end": self.end + 1,
            "u": self.u.tolist(),
            "cumulative": self.cumulative.tolist(),
            "trend": self.trend.tolist(),
            "residuals": self.residuals.tolist(),
            "flags": self.flags,
        }


@dataclass
class CorrectionDiagnostics:
    passes: list[list[SegmentChain]] = field(default_factory=list)
    clamped_frames: list[int] = field(default_factory=list)

    def saturated_frames(self) -> list[int]:
        return sorted({
            flag["frame"] for chains in self.passes for chain in chains
            for flag in chain.flags if flag["kind"] == "saturated"
        })

    def to_json(self) -> bytes:
        doc = {
            "passes": [[chain.as_dict() for chain in chains] for chains in self.passes],
            "clamped_frames": [t + 1 for t in self.clamped_frames],
        }
        return (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")


def visible_segments(track: AnnotationTrack) -> list[tuple[int, int]]:
    """Maximal runs of visible frames as 0-based inclusive (start, end) pairs."""
    segments = []
    start = None
    for t, lab in enumerate(track.labels):
        if lab.exist and start is None:
            start = t
        elif not lab.exist and start is not None:
            segments.append((start, t - 1))
            start = None
    if start is not None:
        segments.append((start, len(track) - 1))
    return segments


def measure_displacements(
    frames: FrameSequence,
    track: AnnotationTrack,
    segment: tuple[int, int],
    radius: int,
) -> tuple[np.ndarray, list[dict]]:
    """Template-match each annotated box onto the next frame of the segment.

    Returns ``u`` of shape (n, 2) with ``u[0] = 0`` and ``u[i]`` the match
    displacement onto segment frame ``i``, plus flags for degenerate or
    infeasible measurements (forced to 0) and saturated ones (|u| at the
    search radius).
    """
    t0, t1 = segment
    n = t1 - t0 + 1
    u = np.zeros((n, 2), dtype=np.int64)
    flags: list[dict] = []
    for k in range(t0, t1):
        i = k - t0 + 1
        target = track.labels[k + 1].rect
        try:
            template = extract_patch(frames.load(k + 1), track.labels[k].rect)
            d, _score = zncc_match(template, frames.load(k + 2), target.center(), radius)
        except DegeneratePatchError:
            flags.append({"frame": k + 1, "kind": "degenerate", "u": [0, 0]})
            continue
        except MatchInfeasibleError:
            flags.append({"frame": k + 1, "kind": "infeasible", "u": [0, 0]})
            continue
        u[i, 0], u[i, 1] = d.dx, d.dy
        if abs(d.dx) == radius or abs(d.dy) == radius:
            flags.append({"frame": k + 1, "kind": "saturated", "u": [d.dx, d.dy]})
    return u, flags


def detrend(cumulative: np.ndarray, min_points: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis ordinary least-squares line removal from a cumulative series.

    Returns (trend, residuals): trend rows are (slope, intercept) per axis
    against the 0-based in-segment index. Series shorter than ``min_points``
    get a zero trend and zero residuals (no correction).
    """
    cum = np.asarray(cumulative, dtype=np.float64)
    n = cum.shape[0]
    trend = np.zeros((2, 2))
    residuals = np.zeros_like(cum)
    if n < min_points:
        return trend, residuals
    k = np.arange(n, dtype=np.float64)
    for axis in range(2):
        slope, intercept = np.polyfit(k, cum[:, axis], 1)
        trend[axis] = (slope, intercept)
        residuals[:, axis] = cum[:, axis] - (slope * k + intercept)
    return trend, residuals


def correct_pass(
    frames: FrameSequence,
    track: AnnotationTrack,
    config: CorrectionConfig,
) -> tuple[AnnotationTrack, list[SegmentChain], list[int]]:
    """One measure-detrend-apply pass over every eligible visible segment."""
    width, height = frames.dimensions()
    labels = list(track.labels)
    chains: list[SegmentChain] = []
    clamped: list[int] = []
    for t0, t1 in visible_segments(track):
        if t1 - t0 + 1 < config.min_segment:
            continue
        u, flags = measure_displacements(frames, track, (t0, t1), config.radius)
        cumulative = np.cumsum(u, axis=0)
        trend, residuals = detrend(cumulative, config.min_segment)
        chains.append(SegmentChain(start=t0, end=t1, u=u, cumulative=cumulative,
                                   trend=trend, residuals=residuals, flags=flags))
        for i in range(t1 - t0 + 1):
            rx, ry = residuals[i]
            if rx == 0.0 and ry == 0.0:
                continue
            rect = labels[t0 + i].rect
            cx, cy = rect.center()
            nx, ny = cx + rx, cy + ry
            # keep the corrected box inside the image when it fits at all
            lo_x, hi_x = rect.w / 2.0, width - rect.w / 2.0
            lo_y, hi_y = rect.h / 2.0, height - rect.h / 2.0
            cnx = min(max(nx, lo_x), hi_x) if lo_x <= hi_x else nx
            cny = min(max(ny, lo_y), hi_y) if lo_y <= hi_y else ny
            if cnx != nx or cny != ny:
                clamped.append(t0 + i)
                nx, ny = cnx, cny
            labels[t0 + i] = FrameLabel.visible(
                BoundingBox.from_center(nx, ny, rect.w, rect.h))
    return replace(track, labels=tuple(labels)), chains, clamped


def correct(
    frames: FrameSequence,
    track: AnnotationTrack,
    config: CorrectionConfig = CorrectionConfig(),
) -> tuple[AnnotationTrack, CorrectionDiagnostics]:
    """Run the configured number of correction passes, each consuming the
    previous pass's output."""
    diagnostics = CorrectionDiagnostics()
    current = track
    for _ in range(config.passes):
        current, chains, clamped = correct_pass(frames, current, config)
        diagnostics.passes.append(chains)
        diagnostics.clamped_frames.extend(clamped)
    return current, diagnostics
