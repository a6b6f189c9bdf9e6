"""Command-line interface.

Batch commands walk the dataset tree (see :mod:`annolab.dataset`), process
videos in parallel with per-video isolation, and exit 0 on full success,
1 when some videos failed, 2 on usage errors.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
from PIL import ImageColor

from . import dataset, noise, render, review
from .core import parse_annotations
from .correction import CorrectionConfig, correct
from .imaging import FrameSequence
from .metrics import (diff_stats, evaluate, evaluate_pooled,
                      calibrate_threshold_pooled, format_report_table)
from .util import derive_seed


def _run_per_video(video_ids, fn, jobs):
    """Apply ``fn(video_id)`` to every video; collect results and failures."""
    results, failures = {}, {}

    def task(video_id):
        try:
            results[video_id] = fn(video_id)
        except Exception as exc:  # per-video isolation
            failures[video_id] = exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(task, video_ids))
    else:
        for video_id in video_ids:
            task(video_id)
    return results, failures


def _report_failures(failures) -> None:
    for video_id in sorted(failures):
        click.echo(f"error: {video_id}: {failures[video_id]}", err=True)


@click.group()
@click.version_option(package_name="annolab")
def main():
    """Measure, simulate, and repair annotation errors in video
    object-detection datasets."""


@main.command()
@click.argument("dataset_root", type=click.Path(exists=True, file_okay=False))
@click.option("--against", type=click.Path(exists=True, file_okay=False),
              help="Second annotation tree; adds center-difference statistics.")
@click.option("--json-out", type=click.Path(dir_okay=False), help="Also write results as JSON.")
def stats(dataset_root, against, json_out):
    """Box-size statistics, and annotation differences with --against."""
    video_ids = dataset.discover_videos(dataset_root)
    if not video_ids:
        raise click.UsageError(f"no videos under {dataset_root}")
    tracks, failures = _run_per_video(
        video_ids, lambda vid: dataset.load_track(dataset_root, vid), jobs=1)
    _report_failures(failures)

    doc = {}
    loaded = [tracks[vid] for vid in sorted(tracks)]
    sizes = noise.size_stats(loaded)
    doc["size_stats"] = sizes.as_dict()
    click.echo(f"videos: {len(loaded)}  visible boxes over "
               f"{sum(len(t) for t in loaded)} frames")
    click.echo(f"box size: w = {sizes.mean_w:.3f} +/- {sizes.std_w:.3f}  "
               f"h = {sizes.mean_h:.3f} +/- {sizes.std_h:.3f}")

    if against:
        pairs_a, pairs_b = [], []
        for vid in sorted(tracks):
            other = dataset.label_path(against, vid)
            if not other.is_file():
                failures[vid] = FileNotFoundError(f"no annotations under {against}")
                click.echo(f"error: {vid}: missing in --against tree", err=True)
                continue
            pairs_a.append(tracks[vid])
            pairs_b.append(parse_annotations(other.read_bytes()))
        diffs = diff_stats(pairs_a, pairs_b)
        doc["diff_stats"] = diffs.as_dict()
        click.echo("center differences (against - original):")
        click.echo(f"  diff:        mu_x {diffs.mean_x: .4f}  sigma_x {diffs.std_x:.4f}  "
                   f"mu_y {diffs.mean_y: .4f}  sigma_y {diffs.std_y:.4f}")
        click.echo(f"  normalized:  mu_x {diffs.norm_mean_x: .4f}  sigma_x {diffs.norm_std_x:.4f}  "
                   f"mu_y {diffs.norm_mean_y: .4f}  sigma_y {diffs.norm_std_y:.4f}")

    if json_out:
        Path(json_out).write_text(json.dumps(doc, indent=1, sort_keys=True))
    sys.exit(1 if failures else 0)


@main.command()
@click.argument("dataset_root", type=click.Path(exists=True, file_okay=False))
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--image-size", help="WxH fallback when a video has no frames.")
@click.option("--seed", type=int, help="Override the config file's seed.")
@click.option("--jobs", default=4, show_default=True)
def inject(dataset_root, config_file, out_dir, image_size, seed, jobs):
    """Apply a noise config to every video; writes corrupted labels,
    multi-box training export, and a replayable injection log."""
    config = noise.parse_noise_config(Path(config_file).read_bytes())
    if seed is not None:
        config = noise.NoiseConfig(seed=seed, specs=config.specs)
    video_ids = dataset.discover_videos(dataset_root)
    if not video_ids:
        raise click.UsageError(f"no videos under {dataset_root}")
    fallback_size = None
    if image_size:
        try:
            w, h = image_size.lower().split("x")
            fallback_size = (int(w), int(h))
        except ValueError:
            raise click.UsageError(f"--image-size must look like 640x512, got {image_size!r}")

    tracks, load_failures = _run_per_video(
        video_ids, lambda vid: dataset.load_track(dataset_root, vid), jobs=1)
    if not tracks:
        _report_failures(load_failures)
        sys.exit(1)
    stats_all = noise.size_stats([tracks[vid] for vid in sorted(tracks)])

    def one(video_id):
        track = tracks[video_id]
        frames = None
        size = fallback_size
        if dataset.has_frames(dataset_root, video_id):
            frames = dataset.frame_sequence(dataset_root, video_id)
            size = frames.dimensions()
        corrupted, log = noise.inject_combined(
            track, config.specs, derive_seed(config.seed, video_id),
            frames=frames, stats=stats_all, image_size=size)
        target = Path(out_dir) / video_id
        target.mkdir(parents=True, exist_ok=True)
        dataset.save_track(out_dir, video_id, corrupted.track)
        (target / "boxes.json").write_bytes(noise.multibox_export(corrupted))
        (target / "injection.json").write_bytes(log.to_json())
        return len(log.records)

    results, failures = _run_per_video(sorted(tracks), one, jobs)
    failures.update(load_failures)
    for vid in sorted(results):
        click.echo(f"{vid}: {results[vid]} change(s)")
    _report_failures(failures)
    sys.exit(1 if failures else 0)


@main.command(name="evaluate")
@click.argument("dataset_root", type=click.Path(exists=True, file_okay=False))
@click.argument("detections_root", type=click.Path(exists=True, file_okay=False))
@click.option("--threshold", type=float, help="Fixed objectness threshold.")
@click.option("--target-fa", type=float, help="Calibrate the threshold to this FA/min.")
@click.option("--fps", type=float, help="Override the annotation files' fps.")
@click.option("--per-video/--no-per-video", default=True, show_default=True)
@click.option("--json-out", type=click.Path(dir_okay=False))
def evaluate_cmd(dataset_root, detections_root, threshold, target_fa, fps,
                 per_video, json_out):
    """Evaluate detections: FA/min, hit rate, TA, and MTA."""
    if (threshold is None) == (target_fa is None):
        raise click.UsageError("exactly one of --threshold or --target-fa is required")
    video_ids = dataset.discover_videos(dataset_root)
    if not video_ids:
        raise click.UsageError(f"no videos under {dataset_root}")

    pairs, failures = {}, {}
    for vid in video_ids:
        try:
            pairs[vid] = (dataset.load_track(dataset_root, vid),
                          dataset.load_detections(detections_root, vid))
        except Exception as exc:
            failures[vid] = exc
    _report_failures(failures)
    unmatched = sorted(p.stem for p in Path(detections_root).glob("*.json")
                       if p.stem not in video_ids)
    if unmatched:
        click.echo(f"warning: detections for unknown video id(s): "
                   f"{', '.join(unmatched)}", err=True)
    if not pairs:
        sys.exit(1)

    ordered = [pairs[vid] for vid in sorted(pairs)]
    pooled_fps = fps if fps is not None else ordered[0][0].fps
    exclusive = False
    if target_fa is not None:
        calibration = calibrate_threshold_pooled(ordered, target_fa, pooled_fps)
        threshold, exclusive = calibration.threshold, calibration.exclusive
        click.echo(f"calibrated threshold: {threshold}"
                   + (" (exclusive)" if exclusive else "")
                   + f"  achieved {calibration.fa_per_min:.3f} FA/min")

    reports = []
    if per_video:
        for vid in sorted(pairs):
            track, dets = pairs[vid]
            try:
                reports.append(evaluate(track, dets, threshold, exclusive,
                                        fps if fps is not None else track.fps))
            except Exception as exc:
                failures[vid] = exc
                click.echo(f"error: {vid}: {exc}", err=True)
    reports.append(evaluate_pooled(ordered, threshold, exclusive, pooled_fps))
    mode = "target_fa" if target_fa is not None else "threshold"
    click.echo(format_report_table(reports, mode))

    if json_out:
        doc = {"threshold": threshold, "exclusive": exclusive,
               "reports": [r.as_dict() for r in reports]}
        Path(json_out).write_text(json.dumps(doc, indent=1))
    sys.exit(1 if failures else 0)


@main.command(name="correct")
@click.argument("dataset_root", type=click.Path(exists=True, file_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--radius", default=20, show_default=True)
@click.option("--passes", default=2, show_default=True)
@click.option("--min-segment", default=3, show_default=True)
@click.option("--jobs", default=4, show_default=True)
def correct_cmd(dataset_root, out_dir, radius, passes, min_segment, jobs):
    """Correct annotations by template matching; writes corrected labels
    plus per-video diagnostics."""
    config = CorrectionConfig(radius=radius, passes=passes, min_segment=min_segment)
    video_ids = dataset.discover_videos(dataset_root)
    if not video_ids:
        raise click.UsageError(f"no videos under {dataset_root}")

    def one(video_id):
        track = dataset.load_track(dataset_root, video_id)
        seq = dataset.frame_sequence(dataset_root, video_id)
        corrected, diagnostics = correct(seq, track, config)
        target = Path(out_dir) / video_id
        target.mkdir(parents=True, exist_ok=True)
        dataset.save_track(out_dir, video_id, corrected)
        (target / "diagnostics.json").write_bytes(diagnostics.to_json())
        moved = sum(1 for a, b in zip(track.labels, corrected.labels) if a != b)
        return moved, len(diagnostics.saturated_frames())

    results, failures = _run_per_video(video_ids, one, jobs)
    for vid in sorted(results):
        moved, saturated = results[vid]
        click.echo(f"{vid}: {moved} frame(s) moved, {saturated} saturated")
    _report_failures(failures)
    sys.exit(1 if failures else 0)


@main.command(name="render")
@click.argument("frames_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--labels", "label_files", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Annotation file; repeat for several sets.")
@click.option("--color", "color_names", multiple=True,
              help="Outline color per set (default green, red, ...).")
def render_cmd(frames_dir, out_dir, label_files, color_names):
    """Write per-frame PNGs with box overlays for visual inspection."""
    tracks = [parse_annotations(Path(p).read_bytes()) for p in label_files]
    colors = list(render.DEFAULT_COLORS)
    for i, name in enumerate(color_names):
        colors[i] = ImageColor.getrgb(name)
    written = render.render_overlays(FrameSequence(frames_dir), tracks, out_dir, colors)
    click.echo(f"wrote {len(written)} overlay frame(s) to {out_dir}")


@main.group(name="review")
def review_group():
    """Human review of corrected annotations."""


@review_group.command(name="serve")
@click.argument("dataset_root", type=click.Path(exists=True, file_okay=False))
@click.argument("corrected_root", type=click.Path(exists=True, file_okay=False))
@click.option("--decisions", default="decisions.json", show_default=True,
              type=click.Path(dir_okay=False))
@click.option("--bind", default="127.0.0.1:8008", show_default=True)
@click.option("--ui", type=click.Path(file_okay=False),
              help="Directory with the built UI bundle (served at /).")
def review_serve(dataset_root, corrected_root, decisions, bind, ui):
    """Serve the review API (and UI, when a bundle is given)."""
    try:
        host, port = bind.rsplit(":", 1)
        port = int(port)
    except ValueError:
        raise click.UsageError(f"--bind must look like host:port, got {bind!r}")
    try:
        review.serve(dataset_root, corrected_root, decisions, host, port, ui)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


@review_group.command(name="export")
@click.argument("dataset_root", type=click.Path(exists=True, file_okay=False))
@click.argument("corrected_root", type=click.Path(exists=True, file_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--decisions", default="decisions.json", show_default=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--default", "default_choice", type=click.Choice(review.CHOICES),
              help="Choice for undecided videos (otherwise the export fails).")
def review_export(dataset_root, corrected_root, out_dir, decisions, default_choice):
    """Materialize operator decisions into a merged annotation tree."""
    try:
        summary = review.export_decisions(dataset_root, corrected_root, decisions,
                                          out_dir, default_choice)
    except (ValueError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"exported {summary['total']} video(s): "
               f"corrected={summary['corrected']} original={summary['original']}")


if __name__ == "__main__":
    main()
