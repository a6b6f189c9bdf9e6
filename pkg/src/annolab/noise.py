"""Seeded injection of annotation-error processes into a track.

Six error processes are supported: additional boxes (random or temporally
consistent), missing boxes (random or temporally consistent), shifted
boxes (absolute-pixel or size-fractional sigma), and ordered combinations.
Every injector is driven by a PCG64 stream derived from ``(seed, keys)``
via ``SeedSequence`` (see :mod:`annolab.util`), so identical inputs give
bit-identical outputs on every platform, and each injection emits a
replayable log: applying the log to the clean input reproduces the
corrupted output exactly.

Counts are derived from percentages by rounding half up. Temporally
consistent variants operate on consecutive blocks (default 100 frames);
a shorter tail block is processed proportionally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from .core import (AnnotationTrack, BoundingBox, FrameLabel, ParseError,
                   ValidationError)
from .imaging import (DegeneratePatchError, FrameSequence, MatchInfeasibleError,
                      extract_patch, patch_variance, zncc_match)
from .metrics import iou
from .util import derive_seed, rng_from, round_half_up

MIN_BOX_SIDE = 4.0
MAX_PLACEMENT_ATTEMPTS = 100


@dataclass(frozen=True)
class SizeStats:
    """Mean and population std of visible box width/height over a dataset."""

    mean_w: float
    std_w: float
    mean_h: float
    std_h: float

    def as_dict(self) -> dict:
        return {"mean_w": self.mean_w, "std_w": self.std_w,
                "mean_h": self.mean_h, "std_h": self.std_h}


def size_stats(tracks: AnnotationTrack | Sequence[AnnotationTrack]) -> SizeStats:
    """Box-size statistics over all visible frames of one or more tracks."""
    if isinstance(tracks, AnnotationTrack):
        tracks = [tracks]
    ws, hs = [], []
    for track in tracks:
        for lab in track.labels:
            if lab.exist:
                ws.append(lab.rect.w)
                hs.append(lab.rect.h)
    if not ws:
        raise ValidationError("no visible boxes in the given tracks")
    return SizeStats(mean_w=float(np.mean(ws)), std_w=float(np.std(ws)),
                     mean_h=float(np.mean(hs)), std_h=float(np.std(hs)))


# ---------------------------------------------------------------------------
# Declarative specs

@dataclass(frozen=True)
class AdditionalRandom:
    p: float


@dataclass(frozen=True)
class AdditionalConsistent:
    p: float
    block: int = 100
    radius: int = 20
    candidates_per_frame: int = 1
    update_template: bool = True


@dataclass(frozen=True)
class MissingRandom:
    p: float


@dataclass(frozen=True)
class MissingConsistent:
    p: float
    block: int = 100


@dataclass(frozen=True)
class Shifted:
    sigma_px: float | None = None
    sigma_frac: float | None = None

    def __post_init__(self):
        if (self.sigma_px is None) == (self.sigma_frac is None):
            raise ValidationError("shifted spec needs exactly one of sigma_px, sigma_frac")
        sigma = self.sigma_px if self.sigma_px is not None else self.sigma_frac
        if sigma < 0:
            raise ValidationError(f"sigma must be >= 0, got {sigma}")


NoiseVariant = Union[AdditionalRandom, AdditionalConsistent, MissingRandom,
                     MissingConsistent, Shifted]


@dataclass(frozen=True)
class NoiseConfig:
    """Seeded, ordered list of error processes to apply."""

    seed: int
    specs: tuple[NoiseVariant, ...]

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        if not self.specs:
            raise ValidationError("noise config must list at least one spec")


_KINDS = {
    "additional_random": (AdditionalRandom, ("p",)),
    "additional_consistent": (AdditionalConsistent,
                              ("p", "block", "radius", "candidates_per_frame", "update_template")),
    "missing_random": (MissingRandom, ("p",)),
    "missing_consistent": (MissingConsistent, ("p", "block")),
    "shifted": (Shifted, ("sigma_px", "sigma_frac")),
}


def parse_noise_config(data: bytes | str) -> NoiseConfig:
    """Parse ``{"seed": u64, "specs": [{"kind": ..., ...}, ...]}``."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
    if not isinstance(obj, dict) or "specs" not in obj:
        raise ParseError("noise config must be an object with a 'specs' array")
    specs = []
    for i, raw in enumerate(obj["specs"]):
        if not isinstance(raw, dict) or "kind" not in raw:
            raise ParseError(f"spec {i}: missing 'kind'")
        kind = raw["kind"]
        if kind not in _KINDS:
            raise ParseError(f"spec {i}: unknown kind {kind!r}")
        cls, keys = _KINDS[kind]
        extra = set(raw) - set(keys) - {"kind"}
        if extra:
            raise ParseError(f"spec {i}: unknown keys {sorted(extra)}")
        specs.append(cls(**{k: raw[k] for k in keys if k in raw}))
    return NoiseConfig(seed=int(obj.get("seed", 0)), specs=tuple(specs))


# ---------------------------------------------------------------------------
# Corrupted labels and the injection log

@dataclass(frozen=True)
class CorruptedLabels:
    """A track plus per-frame additional (false-positive) boxes.

    The annotation track keeps its single ground-truth rect per frame;
    additional boxes live alongside and are merged only in the multi-box
    training export.
    """

    track: AnnotationTrack
    extra_boxes: tuple[tuple[BoundingBox, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "extra_boxes",
                           tuple(tuple(bs) for bs in self.extra_boxes))
        if len(self.extra_boxes) != len(self.track):
            raise ValidationError(
                f"extra_boxes length {len(self.extra_boxes)} != track length {len(self.track)}")

    @classmethod
    def from_track(cls, track: AnnotationTrack) -> "CorruptedLabels":
        return cls(track, tuple(() for _ in range(len(track))))

    def frame_boxes(self, t: int) -> list[BoundingBox]:
        lab = self.track.labels[t]
        boxes = [lab.rect] if lab.exist else []
        boxes.extend(self.extra_boxes[t])
        return boxes


@dataclass(frozen=True)
class LogRecord:
    """One injected change. ``frame`` is 0-based; rects are (x, y, w, h)."""

    frame: int
    kind: str  # add | remove | shift | skip
    before: tuple[float, ...] | None = None
    after: tuple[float, ...] | None = None
    note: str = ""


@dataclass(frozen=True)
class InjectionLog:
    video_id: str
    records: tuple[LogRecord, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def frames(self, kind: str | None = None) -> list[int]:
        return [r.frame for r in self.records if kind is None or r.kind == kind]

    def to_json(self) -> bytes:
        doc = {
            "video_id": self.video_id,
            "records": [
                {"frame": r.frame, "kind": r.kind,
                 "before": list(r.before) if r.before else None,
                 "after": list(r.after) if r.after else None,
                 "note": r.note}
                for r in self.records
            ],
        }
        return (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")

    @classmethod
    def from_json(cls, data: bytes | str) -> "InjectionLog":
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        obj = json.loads(data)
        records = tuple(
            LogRecord(frame=r["frame"], kind=r["kind"],
                      before=tuple(r["before"]) if r.get("before") else None,
                      after=tuple(r["after"]) if r.get("after") else None,
                      note=r.get("note", ""))
            for r in obj["records"]
        )
        return cls(video_id=obj.get("video_id", ""), records=records)


def _as_corrupted(labels: AnnotationTrack | CorruptedLabels) -> CorruptedLabels:
    if isinstance(labels, AnnotationTrack):
        return CorruptedLabels.from_track(labels)
    return labels


def apply_log(log: InjectionLog | Sequence[LogRecord],
              base: AnnotationTrack | CorruptedLabels) -> CorruptedLabels:
    """Replay an injection log onto a clean input, reproducing the corrupted
    output exactly."""
    records = log.records if isinstance(log, InjectionLog) else log
    state = _as_corrupted(base)
    labels = list(state.track.labels)
    extras = [list(bs) for bs in state.extra_boxes]
    for rec in records:
        if rec.kind == "remove":
            labels[rec.frame] = FrameLabel.hidden()
        elif rec.kind == "shift":
            labels[rec.frame] = FrameLabel.visible(BoundingBox(*rec.after))
        elif rec.kind == "add":
            extras[rec.frame].append(BoundingBox(*rec.after))
        elif rec.kind == "skip":
            pass
        else:
            raise ValidationError(f"unknown log record kind {rec.kind!r}")
    track = replace(state.track, labels=tuple(labels))
    return CorruptedLabels(track, tuple(tuple(bs) for bs in extras))


def _finish(base: CorruptedLabels, records: list[LogRecord]) -> tuple[CorruptedLabels, InjectionLog]:
    log = InjectionLog(base.track.video_id, tuple(records))
    return apply_log(log, base), log


def _check_p(p: float) -> None:
    if not 0 <= p <= 100:
        raise ValidationError(f"percentage must lie in [0, 100], got {p}")


# ---------------------------------------------------------------------------
# Injectors

def _block_spans(total: int, block: int) -> list[tuple[int, int]]:
    return [(b0, min(b0 + block, total)) for b0 in range(0, total, block)]


def inject_missing_consistent(
    labels: AnnotationTrack | CorruptedLabels, p: float,
    seed: int = 0, block: int = 100,
) -> tuple[CorruptedLabels, InjectionLog]:
    """Remove annotations from the last p% of every block of frames."""
    _check_p(p)
    state = _as_corrupted(labels)
    records = []
    for b0, b1 in _block_spans(len(state.track), block):
        span = b1 - b0
        removed = round_half_up(p * span / 100.0)
        for t in range(b1 - removed, b1):
            lab = state.track.labels[t]
            if lab.exist:
                records.append(LogRecord(frame=t, kind="remove",
                                         before=tuple(lab.rect.as_list())))
    return _finish(state, records)


def inject_missing_random(
    labels: AnnotationTrack | CorruptedLabels, p: float, seed: int = 0,
) -> tuple[CorruptedLabels, InjectionLog]:
    """Remove annotations from p% of the visible frames, chosen uniformly
    without replacement."""
    _check_p(p)
    state = _as_corrupted(labels)
    visible = state.track.visible_indices()
    count = round_half_up(p * len(visible) / 100.0)
    records = []
    if count:
        rng = rng_from(seed)
        chosen = rng.choice(len(visible), size=count, replace=False)
        for i in sorted(int(c) for c in chosen):
            t = visible[i]
            records.append(LogRecord(frame=t, kind="remove",
                                     before=tuple(state.track.labels[t].rect.as_list())))
    return _finish(state, records)


def inject_shifted(
    labels: AnnotationTrack | CorruptedLabels,
    sigma_px: float | None = None,
    sigma_frac: float | None = None,
    seed: int = 0,
    image_size: tuple[int, int] | None = None,
) -> tuple[CorruptedLabels, InjectionLog]:
    """Shift every visible box center by zero-mean Gaussian noise; sizes are
    never changed.

    ``sigma_px`` is an absolute per-axis std; ``sigma_frac`` scales with each
    box (sigma_x = f*w, sigma_y = f*h). With ``image_size`` given, shifted
    centers are clamped into the image, which keeps at least half of the box
    inside; clamps are noted in the log. One standard-normal draw of shape
    (n_visible, 2) is consumed, in frame order.
    """
    spec = Shifted(sigma_px=sigma_px, sigma_frac=sigma_frac)
    state = _as_corrupted(labels)
    sigma = spec.sigma_px if spec.sigma_px is not None else spec.sigma_frac
    if sigma == 0:
        return state, InjectionLog(state.track.video_id)

    visible = state.track.visible_indices()
    rng = rng_from(seed)
    eps = rng.standard_normal((len(visible), 2))
    records = []
    for i, t in enumerate(visible):
        rect = state.track.labels[t].rect
        if spec.sigma_px is not None:
            dx, dy = eps[i, 0] * spec.sigma_px, eps[i, 1] * spec.sigma_px
        else:
            dx, dy = eps[i, 0] * spec.sigma_frac * rect.w, eps[i, 1] * spec.sigma_frac * rect.h
        if dx == 0.0 and dy == 0.0:
            continue
        cx, cy = rect.center()
        nx, ny = cx + dx, cy + dy
        clamped = False
        if image_size is not None:
            w_img, h_img = image_size
            cnx, cny = min(max(nx, 0.0), float(w_img)), min(max(ny, 0.0), float(h_img))
            clamped = (cnx != nx) or (cny != ny)
            nx, ny = cnx, cny
        new = BoundingBox.from_center(nx, ny, rect.w, rect.h)
        records.append(LogRecord(frame=t, kind="shift",
                                 before=tuple(rect.as_list()),
                                 after=tuple(new.as_list()),
                                 note="clamped" if clamped else ""))
    return _finish(state, records)


def _truncated_normal(rng: np.random.Generator, mean: float, std: float,
                      lo: float, hi: float) -> float:
    if lo > hi:
        raise ValidationError(f"empty truncation range [{lo}, {hi}]")
    if std == 0:
        return min(max(mean, lo), hi)
    value = mean
    for _ in range(64):
        value = rng.normal(mean, std)
        if lo <= value <= hi:
            return value
    return min(max(value, lo), hi)


def _random_box(rng: np.random.Generator, stats: SizeStats,
                image_size: tuple[int, int]) -> BoundingBox:
    w_img, h_img = image_size
    if w_img < MIN_BOX_SIDE or h_img < MIN_BOX_SIDE:
        raise ValidationError(f"image {w_img}x{h_img} smaller than the {MIN_BOX_SIDE}px minimum box")
    w = _truncated_normal(rng, stats.mean_w, stats.std_w, MIN_BOX_SIDE, float(w_img))
    h = _truncated_normal(rng, stats.mean_h, stats.std_h, MIN_BOX_SIDE, float(h_img))
    x = rng.uniform(0.0, w_img - w) if w_img > w else 0.0
    y = rng.uniform(0.0, h_img - h) if h_img > h else 0.0
    return BoundingBox(x, y, w, h)


def _overlaps_existing(box: BoundingBox, state: CorruptedLabels, t: int) -> bool:
    return any(iou(box, other) > 0.0 for other in state.frame_boxes(t))


def inject_additional_random(
    labels: AnnotationTrack | CorruptedLabels,
    stats: SizeStats,
    p: float,
    image_size: tuple[int, int],
    seed: int = 0,
) -> tuple[CorruptedLabels, InjectionLog]:
    """Add one spurious box to p% of the frames, chosen uniformly.

    Box size is Gaussian with the dataset statistics (truncated to
    [4px, image side]); position is uniform with the box fully inside the
    image; candidates overlapping any existing box are resampled, up to 100
    attempts, after which the frame is skipped and logged.
    """
    _check_p(p)
    state = _as_corrupted(labels)
    count = round_half_up(p * len(state.track) / 100.0)
    records = []
    if count:
        rng = rng_from(seed)
        chosen = sorted(int(c) for c in rng.choice(len(state.track), size=count, replace=False))
        for t in chosen:
            for _ in range(MAX_PLACEMENT_ATTEMPTS):
                box = _random_box(rng, stats, image_size)
                if not _overlaps_existing(box, state, t):
                    records.append(LogRecord(frame=t, kind="add",
                                             after=tuple(box.as_list())))
                    break
            else:
                records.append(LogRecord(frame=t, kind="skip",
                                         note="no zero-overlap placement in 100 attempts"))
    return _finish(state, records)


def inject_additional_consistent(
    labels: AnnotationTrack | CorruptedLabels,
    frames: FrameSequence,
    stats: SizeStats,
    p: float,
    seed: int = 0,
    block: int = 100,
    radius: int = 20,
    candidates_per_frame: int = 1,
    update_template: bool = True,
) -> tuple[CorruptedLabels, InjectionLog]:
    """Add a tracked spurious box to the last p% of every block.

    For each block, random candidate boxes are proposed on the leading
    (100-p)% of frames; the candidate with the highest patch variance wins
    (high variance mimics object-like appearance), and its patch is then
    tracked with the ZNCC matcher over the trailing p% of frames, the
    template being re-cut at the matched position each frame (set
    ``update_template=False`` to track with the fixed seed patch).
    """
    _check_p(p)
    state = _as_corrupted(labels)
    if p == 0:
        return state, InjectionLog(state.track.video_id)
    image_size = frames.dimensions()
    rng = rng_from(seed)
    records = []
    for b0, b1 in _block_spans(len(state.track), block):
        span = b1 - b0
        tracked = round_half_up(p * span / 100.0)
        if tracked == 0:
            continue
        n_candidates = span - tracked
        if n_candidates == 0:
            records.append(LogRecord(frame=b0, kind="skip",
                                     note="block has no candidate frames"))
            continue

        best = None  # (variance, frame, box)
        for t in range(b0, b0 + n_candidates):
            frame = frames.load(t + 1)
            for _ in range(candidates_per_frame):
                box = None
                for _attempt in range(MAX_PLACEMENT_ATTEMPTS):
                    cand = _random_box(rng, stats, image_size)
                    if not _overlaps_existing(cand, state, t):
                        box = cand
                        break
                if box is None:
                    continue
                try:
                    var = patch_variance(extract_patch(frame, box))
                except DegeneratePatchError:
                    continue
                if best is None or var > best[0]:
                    best = (var, t, box)
        if best is None:
            records.append(LogRecord(frame=b0, kind="skip",
                                     note="no viable candidate in block"))
            continue

        _, seed_frame, seed_box = best
        try:
            template = extract_patch(frames.load(seed_frame + 1), seed_box)
        except DegeneratePatchError:
            records.append(LogRecord(frame=b0, kind="skip",
                                     note="seed patch degenerate"))
            continue
        center = seed_box.center()
        for t in range(b0 + n_candidates, b1):
            frame = frames.load(t + 1)
            note = ""
            try:
                d, _score = zncc_match(template, frame, center, radius)
                center = (center[0] + d.dx, center[1] + d.dy)
            except MatchInfeasibleError:
                note = "match-infeasible"
            box = BoundingBox.from_center(center[0], center[1], seed_box.w, seed_box.h)
            records.append(LogRecord(frame=t, kind="add",
                                     after=tuple(box.as_list()), note=note))
            if update_template:
                try:
                    template = extract_patch(frame, box)
                except DegeneratePatchError:
                    pass
    return _finish(state, records)


def inject_combined(
    labels: AnnotationTrack | CorruptedLabels,
    specs: Sequence[NoiseVariant],
    seed: int,
    frames: FrameSequence | None = None,
    stats: SizeStats | None = None,
    image_size: tuple[int, int] | None = None,
) -> tuple[CorruptedLabels, InjectionLog]:
    """Apply specs in the given order; stage ``i`` runs on the sub-seed
    derived from ``(seed, i)`` and logs concatenate.

    The canonical order for the combined recipe is missing, additional,
    shifted (so shifts touch only surviving boxes).
    """
    if not specs:
        raise ValidationError("combined injection needs at least one spec")
    state = _as_corrupted(labels)
    if image_size is None and frames is not None:
        image_size = frames.dimensions()
    all_records: list[LogRecord] = []
    for i, spec in enumerate(specs):
        sub_seed = derive_seed(seed, i)
        if isinstance(spec, MissingConsistent):
            state, log = inject_missing_consistent(state, spec.p, sub_seed, spec.block)
        elif isinstance(spec, MissingRandom):
            state, log = inject_missing_random(state, spec.p, sub_seed)
        elif isinstance(spec, Shifted):
            state, log = inject_shifted(state, spec.sigma_px, spec.sigma_frac,
                                        sub_seed, image_size)
        elif isinstance(spec, AdditionalRandom):
            if stats is None or image_size is None:
                raise ValidationError("additional_random needs size stats and image size")
            state, log = inject_additional_random(state, stats, spec.p, image_size, sub_seed)
        elif isinstance(spec, AdditionalConsistent):
            if stats is None or frames is None:
                raise ValidationError("additional_consistent needs size stats and frames")
            state, log = inject_additional_consistent(
                state, frames, stats, spec.p, sub_seed, spec.block, spec.radius,
                spec.candidates_per_frame, spec.update_template)
        else:
            raise ValidationError(f"unknown noise spec {spec!r}")
        all_records.extend(log.records)
    return state, InjectionLog(state.track.video_id, tuple(all_records))


def multibox_export(labels: CorruptedLabels) -> bytes:
    """One-way training export merging the ground-truth rect with additional
    boxes: ``{"video_id": ..., "frames": [[[x, y, w, h], ...], ...]}``."""
    doc = {
        "video_id": labels.track.video_id,
        "frames": [
            [box.as_list() for box in labels.frame_boxes(t)]
            for t in range(len(labels.track))
        ],
    }
    return (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")
