"""Detection-vs-annotation evaluation: IoU, hit/false-alarm accounting,
tracking accuracy (TA), modified tracking accuracy (MTA), threshold
calibration to a target false-alarm rate, and annotation-difference stats.

Conventions, pinned here because they matter for comparability:

* A detection is a hit when IoU with the ground truth is >= 0.5 (Pascal
  criterion); a detection with exactly zero IoU is a false alarm (every
  detection on an invisible frame is); detections with 0 < IoU < 0.5 are
  neither hits nor false alarms.
* Detections survive a threshold ``t`` when ``score >= t`` (``score > t``
  in exclusive mode, see :func:`calibrate_threshold`).
* When several detections survive on one frame, the per-frame IoU used by
  TA/MTA comes from the highest-scoring one (first of equals).
* MTA generalizes the prediction flag to the per-frame surviving-detection
  count ``n_t`` in its denominator, so every extra false detection adds one
  denominator unit; with at most one detection per frame MTA equals TA
  exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import AnnotationTrack, BoundingBox, Detection, DetectionSet, FrameLabel

logger = logging.getLogger(__name__)

HIT_IOU = 0.5


class UndefinedMetricError(ValueError):
    """The metric is undefined for this input (e.g. no visible frames)."""


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0.0 when disjoint."""
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area() + b.area() - inter)


@dataclass(frozen=True)
class FrameOutcome:
    """Per-frame hit/false-alarm accounting for detections above threshold."""

    t: int
    v: int
    n: int
    best_iou: float
    hit: int
    false_alarms: int


def classify_frame(label: FrameLabel, dets: Sequence[Detection], t: int = 0) -> FrameOutcome:
    """Classify one frame's surviving detections against its label."""
    if label.exist and dets:
        ious = [iou(d.rect, label.rect) for d in dets]
        best = max(ious)
        fa = sum(1 for v in ious if v == 0.0)
    else:
        best = 0.0
        fa = len(dets)  # no ground truth: every detection is a false alarm
    hit = 1 if label.exist == 1 and best >= HIT_IOU else 0
    return FrameOutcome(t=t, v=label.exist, n=len(dets), best_iou=best,
                        hit=hit, false_alarms=fa)


def surviving(dets: Sequence[Detection], threshold: float, exclusive: bool = False) -> list[Detection]:
    """Detections that pass the objectness threshold, order preserved."""
    if exclusive:
        return [d for d in dets if d.score > threshold]
    return [d for d in dets if d.score >= threshold]


def hit_rate(outcomes: Iterable[FrameOutcome]) -> float:
    """Percentage of visible frames scored as hits."""
    outcomes = list(outcomes)
    visible = sum(o.v for o in outcomes)
    if visible == 0:
        raise UndefinedMetricError("hit rate undefined: no visible frames")
    return 100.0 * sum(o.hit for o in outcomes) / visible


def fa_per_min(outcomes: Iterable[FrameOutcome], fps: float) -> float:
    """False alarms per minute of video."""
    outcomes = list(outcomes)
    if not outcomes:
        raise UndefinedMetricError("false-alarm rate undefined: empty track")
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    return sum(o.false_alarms for o in outcomes) * 60.0 * fps / len(outcomes)


def _check_lengths(track: AnnotationTrack, dets: DetectionSet) -> None:
    if len(track) != len(dets):
        raise ValueError(
            f"track has {len(track)} frames but detections have {len(dets)}")


def _top_iou(label: FrameLabel, survivors: Sequence[Detection]) -> float:
    """IoU of the highest-scoring surviving detection (first of equals)."""
    if not label.exist or not survivors:
        return 0.0
    best = survivors[0]
    for d in survivors[1:]:
        if d.score > best.score:
            best = d
    return iou(best.rect, label.rect)


def tracking_accuracy(track: AnnotationTrack, dets: DetectionSet,
                      threshold: float, exclusive: bool = False) -> float:
    """Mean per-frame IoU credit: IoU_t*v_t*p_t + (1-p_t)(1-v_t), in percent."""
    _check_lengths(track, dets)
    total = 0.0
    for label, frame in zip(track.labels, dets.frames):
        surv = surviving(frame, threshold, exclusive)
        p = 1 if surv else 0
        total += _top_iou(label, surv) * label.exist * p + (1 - p) * (1 - label.exist)
    return 100.0 * total / len(track)


def modified_tracking_accuracy(track: AnnotationTrack, dets: DetectionSet,
                               threshold: float, exclusive: bool = False) -> float:
    """TA variant whose denominator grows with the surviving-detection count,
    so extra false detections cost accuracy."""
    _check_lengths(track, dets)
    num = 0.0
    den = 0.0
    for label, frame in zip(track.labels, dets.frames):
        surv = surviving(frame, threshold, exclusive)
        n = len(surv)
        p = min(n, 1)
        num += _top_iou(label, surv) * label.exist * p + (1 - p) * (1 - label.exist)
        den += max(label.exist, n) + (1 - p) * (1 - label.exist)
    return 100.0 * num / den


@dataclass(frozen=True)
class CalibrationResult:
    """Threshold achieving a target false-alarm rate.

    ``exclusive`` means detections must score strictly above ``threshold``
    (needed when even the largest score must be cut to reach the target).
    """

    threshold: float
    exclusive: bool
    fa_per_min: float


def _fa_scores(pairs: Sequence[tuple[AnnotationTrack, DetectionSet]]) -> tuple[list[float], list[float], int]:
    """(all scores, scores of zero-IoU detections, total frame count)."""
    scores: list[float] = []
    fa: list[float] = []
    frames = 0
    for track, dets in pairs:
        _check_lengths(track, dets)
        frames += len(track)
        for label, frame in zip(track.labels, dets.frames):
            for d in frame:
                scores.append(d.score)
                if not label.exist or iou(d.rect, label.rect) == 0.0:
                    fa.append(d.score)
    return scores, fa, frames


def calibrate_threshold_pooled(pairs: Sequence[tuple[AnnotationTrack, DetectionSet]],
                               target_fa_per_min: float, fps: float = 30.0) -> CalibrationResult:
    """Smallest threshold whose pooled FA/min does not exceed the target.

    Candidates are 0 plus every distinct detection score; the FA rate is a
    non-increasing step function of the threshold, so the sweep is exact.
    """
    if target_fa_per_min < 0:
        raise ValueError(f"target FA/min must be >= 0, got {target_fa_per_min}")
    scores, fa, frames = _fa_scores(pairs)
    if frames == 0:
        raise UndefinedMetricError("cannot calibrate on an empty track")
    if not scores:
        logger.warning("no detections to calibrate against; returning threshold 0")
        return CalibrationResult(0.0, False, 0.0)

    fa_sorted = np.sort(np.asarray(fa)) if fa else np.empty(0)
    per_min = 60.0 * fps / frames

    def rate_at(threshold: float) -> float:
        kept = len(fa_sorted) - int(np.searchsorted(fa_sorted, threshold, side="left"))
        return kept * per_min

    for candidate in [0.0] + sorted(set(scores)):
        rate = rate_at(candidate)
        if rate <= target_fa_per_min:
            return CalibrationResult(candidate, False, rate)
    # even keeping only the top score exceeds the target: cut strictly above it
    return CalibrationResult(max(scores), True, 0.0)


def calibrate_threshold(track: AnnotationTrack, dets: DetectionSet,
                        target_fa_per_min: float, fps: float | None = None) -> CalibrationResult:
    """Single-video :func:`calibrate_threshold_pooled`."""
    return calibrate_threshold_pooled([(track, dets)], target_fa_per_min,
                                      fps if fps is not None else track.fps)


@dataclass(frozen=True)
class DiffStats:
    """Center differences between two annotation sets over co-visible frames,
    raw (pixels) and normalized by the first set's box size."""

    mean_x: float
    std_x: float
    mean_y: float
    std_y: float
    norm_mean_x: float
    norm_std_x: float
    norm_mean_y: float
    norm_std_y: float

    def as_dict(self) -> dict:
        return {
            "mean_x": self.mean_x, "std_x": self.std_x,
            "mean_y": self.mean_y, "std_y": self.std_y,
            "norm_mean_x": self.norm_mean_x, "norm_std_x": self.norm_std_x,
            "norm_mean_y": self.norm_mean_y, "norm_std_y": self.norm_std_y,
        }


def diff_stats(a: AnnotationTrack | Sequence[AnnotationTrack],
               b: AnnotationTrack | Sequence[AnnotationTrack]) -> DiffStats:
    """Mean and population std of center(b) - center(a), per axis.

    Accepts single tracks or parallel collections (stats pool across videos).
    """
    tracks_a = [a] if isinstance(a, AnnotationTrack) else list(a)
    tracks_b = [b] if isinstance(b, AnnotationTrack) else list(b)
    if len(tracks_a) != len(tracks_b):
        raise ValueError(f"{len(tracks_a)} vs {len(tracks_b)} tracks")

    dx, dy, nx, ny = [], [], [], []
    for ta, tb in zip(tracks_a, tracks_b):
        if len(ta) != len(tb):
            raise ValueError(
                f"track lengths differ: {len(ta)} vs {len(tb)} ({ta.video_id!r})")
        for la, lb in zip(ta.labels, tb.labels):
            if la.exist and lb.exist:
                ca, cb = la.rect.center(), lb.rect.center()
                dx.append(cb[0] - ca[0])
                dy.append(cb[1] - ca[1])
                nx.append((cb[0] - ca[0]) / la.rect.w)
                ny.append((cb[1] - ca[1]) / la.rect.h)
    if not dx:
        raise UndefinedMetricError("no frames visible in both annotation sets")
    return DiffStats(
        mean_x=float(np.mean(dx)), std_x=float(np.std(dx)),
        mean_y=float(np.mean(dy)), std_y=float(np.std(dy)),
        norm_mean_x=float(np.mean(nx)), norm_std_x=float(np.std(nx)),
        norm_mean_y=float(np.mean(ny)), norm_std_y=float(np.std(ny)),
    )


def compare_tracks(a: AnnotationTrack, b: AnnotationTrack) -> float:
    """Tracking accuracy of annotation set ``b`` against set ``a``, in percent.

    ``b`` plays the detector role: its visibility flag is the prediction flag
    and per-frame IoU is taken between the two rects. Symmetric in (a, b).
    """
    if len(a) != len(b):
        raise ValueError(f"track lengths differ: {len(a)} vs {len(b)}")
    total = 0.0
    for la, lb in zip(a.labels, b.labels):
        if la.exist and lb.exist:
            total += iou(la.rect, lb.rect)
        elif not la.exist and not lb.exist:
            total += 1.0
    return 100.0 * total / len(a)


@dataclass(frozen=True)
class EvalReport:
    """Aggregate metrics for one video (or a pooled dataset) at one threshold."""

    video_id: str
    threshold: float
    exclusive: bool
    hit_rate: float
    fa_per_min: float
    ta: float
    mta: float
    outcomes: tuple[FrameOutcome, ...]

    def as_dict(self, with_frames: bool = False) -> dict:
        doc = {
            "video_id": self.video_id,
            "threshold": self.threshold,
            "exclusive": self.exclusive,
            "hit_rate": self.hit_rate,
            "fa_per_min": self.fa_per_min,
            "ta": self.ta,
            "mta": self.mta,
        }
        if with_frames:
            doc["frames"] = [
                {"t": o.t + 1, "v": o.v, "n": o.n, "best_iou": o.best_iou,
                 "hit": o.hit, "false_alarms": o.false_alarms}
                for o in self.outcomes
            ]
        return doc


def evaluate(track: AnnotationTrack, dets: DetectionSet, threshold: float,
             exclusive: bool = False, fps: float | None = None) -> EvalReport:
    """Evaluate one video at a fixed objectness threshold."""
    _check_lengths(track, dets)
    outcomes = tuple(
        classify_frame(label, surviving(frame, threshold, exclusive), t)
        for t, (label, frame) in enumerate(zip(track.labels, dets.frames))
    )
    return EvalReport(
        video_id=track.video_id,
        threshold=threshold,
        exclusive=exclusive,
        hit_rate=hit_rate(outcomes),
        fa_per_min=fa_per_min(outcomes, fps if fps is not None else track.fps),
        ta=tracking_accuracy(track, dets, threshold, exclusive),
        mta=modified_tracking_accuracy(track, dets, threshold, exclusive),
        outcomes=outcomes,
    )


def evaluate_pooled(pairs: Sequence[tuple[AnnotationTrack, DetectionSet]],
                    threshold: float, exclusive: bool = False,
                    fps: float = 30.0) -> EvalReport:
    """Evaluate several videos as one pooled frame population."""
    if not pairs:
        raise ValueError("nothing to evaluate")
    outcomes: list[FrameOutcome] = []
    ta_sum = 0.0
    num = 0.0
    den = 0.0
    frames = 0
    for track, dets in pairs:
        _check_lengths(track, dets)
        for t, (label, frame) in enumerate(zip(track.labels, dets.frames)):
            surv = surviving(frame, threshold, exclusive)
            outcomes.append(classify_frame(label, surv, t))
            n = len(surv)
            p = min(n, 1)
            credit = _top_iou(label, surv) * label.exist * p + (1 - p) * (1 - label.exist)
            ta_sum += credit
            num += credit
            den += max(label.exist, n) + (1 - p) * (1 - label.exist)
        frames += len(track)
    return EvalReport(
        video_id="all",
        threshold=threshold,
        exclusive=exclusive,
        hit_rate=hit_rate(outcomes),
        fa_per_min=fa_per_min(outcomes, fps),
        ta=100.0 * ta_sum / frames,
        mta=100.0 * num / den,
        outcomes=tuple(outcomes),
    )


def format_report_table(reports: Sequence[EvalReport], mode: str = "threshold") -> str:
    """Aligned plain-text table; ``mode`` picks the leading column:
    ``threshold`` -> FA HR TA MTA, ``target_fa`` -> Th HR TA MTA."""
    if mode == "threshold":
        header = f"{'video':<24} {'FA':>7} {'HR':>7} {'TA':>7} {'MTA':>7}"
        rows = [
            f"{r.video_id:<24} {r.fa_per_min:>7.2f} {r.hit_rate:>7.2f} "
            f"{r.ta:>7.2f} {r.mta:>7.2f}"
            for r in reports
        ]
    elif mode == "target_fa":
        header = f"{'video':<24} {'Th':>7} {'HR':>7} {'TA':>7} {'MTA':>7}"
        rows = [
            f"{r.video_id:<24} {r.threshold:>7.2f} {r.hit_rate:>7.2f} "
            f"{r.ta:>7.2f} {r.mta:>7.2f}"
            for r in reports
        ]
    else:
        raise ValueError(f"unknown table mode {mode!r}")
    return "\n".join([header, *rows])
