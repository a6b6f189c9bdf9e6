import numpy as np
import pytest

from annolab.core import (AnnotationTrack, BoundingBox, FrameLabel,
                          ParseError, ValidationError)
from annolab.imaging import FrameSequence, write_pgm
from annolab.metrics import iou
from annolab.noise import (AdditionalRandom, CorruptedLabels, InjectionLog,
                           MissingConsistent, Shifted, apply_log,
                           inject_additional_consistent,
                           inject_additional_random, inject_combined,
                           inject_missing_consistent, inject_missing_random,
                           inject_shifted, multibox_export, parse_noise_config,
                           size_stats)

from conftest import static_scene


def uniform_track(n, box=None, video_id="v"):
    box = box or BoundingBox(50, 40, 30, 20)
    return AnnotationTrack(video_id, (FrameLabel.visible(box),) * n)


class TestSizeStats:
    def test_single_box(self):
        track = AnnotationTrack("v", (FrameLabel.visible(BoundingBox(0, 0, 40, 30)),))
        stats = size_stats(track)
        assert (stats.mean_w, stats.std_w, stats.mean_h, stats.std_h) == (40, 0, 30, 0)

    def test_two_boxes(self):
        track = AnnotationTrack("v", (
            FrameLabel.visible(BoundingBox(0, 0, 30, 30)),
            FrameLabel.visible(BoundingBox(0, 0, 50, 50)),
        ))
        stats = size_stats(track)
        assert stats.mean_w == 40 and stats.std_w == 10

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(3)
        widths = rng.uniform(5, 80, 40)
        heights = rng.uniform(5, 60, 40)
        track = AnnotationTrack("v", tuple(
            FrameLabel.visible(BoundingBox(0, 0, w, h)) for w, h in zip(widths, heights)))
        stats = size_stats(track)
        mean = sum(widths) / len(widths)
        var = sum((w - mean) ** 2 for w in widths) / len(widths)
        assert stats.mean_w == pytest.approx(mean)
        assert stats.std_w == pytest.approx(var ** 0.5)

    def test_no_visible_boxes(self):
        with pytest.raises(ValidationError):
            size_stats(AnnotationTrack("v", (FrameLabel.hidden(),)))


class TestMissingConsistent:
    def test_literal_block_procedure(self):
        out, log = inject_missing_consistent(uniform_track(100), 25)
        removed = [t for t, lab in enumerate(out.track.labels) if not lab.exist]
        assert removed == list(range(75, 100))
        assert log.frames("remove") == removed

    def test_identity_at_zero(self):
        track = uniform_track(100)
        out, log = inject_missing_consistent(track, 0)
        assert out.track == track
        assert log.records == ()

    def test_everything_removed_at_hundred(self):
        out, _ = inject_missing_consistent(uniform_track(150), 100)
        assert out.track.visible_indices() == []

    def test_tail_block_proportional(self):
        out, _ = inject_missing_consistent(uniform_track(250), 25)
        removed = {t for t, lab in enumerate(out.track.labels) if not lab.exist}
        # 13 = round(25% of the 50-frame tail), taken from its end
        assert removed == set(range(75, 100)) | set(range(175, 200)) | set(range(237, 250))

    def test_p_out_of_range(self):
        with pytest.raises(ValidationError):
            inject_missing_consistent(uniform_track(10), 101)


class TestMissingRandom:
    def test_identity_at_zero(self):
        track = uniform_track(50)
        out, log = inject_missing_random(track, 0, seed=1)
        assert out.track == track and log.records == ()

    def test_all_removed_at_hundred(self):
        out, _ = inject_missing_random(uniform_track(50), 100, seed=1)
        assert out.track.visible_indices() == []

    def test_exact_count_and_only_visible_frames(self):
        track, _ = inject_missing_consistent(uniform_track(200), 25)
        before = set(track.track.visible_indices())
        out, log = inject_missing_random(track, 30, seed=9)
        removed = set(log.frames("remove"))
        assert len(removed) == round(0.30 * len(before))
        assert removed <= before

    def test_block_occupancy_chi_square(self):
        # uniformity sanity check on the pinned seed
        out, log = inject_missing_random(uniform_track(10000), 25, seed=42)
        removed = np.array(log.frames("remove"))
        observed, _ = np.histogram(removed, bins=10, range=(0, 10000))
        expected = len(removed) / 10
        chi2 = float(((observed - expected) ** 2 / expected).sum())
        assert chi2 < 27.88  # 0.1% critical value, 9 dof


class TestShifted:
    def test_identity_at_zero_sigma(self):
        track = uniform_track(20)
        out, log = inject_shifted(track, sigma_px=0.0, seed=4)
        assert out.track == track and log.records == ()

    def test_sizes_never_change(self):
        out, _ = inject_shifted(uniform_track(200), sigma_px=3.0, seed=4)
        for lab in out.track.labels:
            assert (lab.rect.w, lab.rect.h) == (30, 20)

    def test_desk_scale_statistics(self):
        out, log = inject_shifted(uniform_track(5000), sigma_px=1.5, seed=11)
        before = uniform_track(5000)
        deltas = np.array([
            [a.rect.center()[0] - b.rect.center()[0],
             a.rect.center()[1] - b.rect.center()[1]]
            for a, b in zip(out.track.labels, before.labels)])
        assert abs(deltas[:, 0].std() - 1.5) < 0.1
        assert abs(deltas[:, 1].std() - 1.5) < 0.1
        assert abs(deltas.mean(axis=0)).max() < 0.1

    def test_fractional_sigma_scales_with_box(self):
        box = BoundingBox(100, 100, 50, 10)
        out, _ = inject_shifted(uniform_track(4000, box=box), sigma_frac=0.10, seed=5)
        dx = np.array([lab.rect.center()[0] - 125.0 for lab in out.track.labels])
        dy = np.array([lab.rect.center()[1] - 105.0 for lab in out.track.labels])
        assert dx.std() == pytest.approx(5.0, abs=0.3)   # 10% of 50 px width
        assert dy.std() == pytest.approx(1.0, abs=0.06)  # 10% of 10 px height

    def test_clamp_keeps_center_inside_image(self):
        box = BoundingBox(1, 1, 10, 10)
        out, log = inject_shifted(uniform_track(500, box=box), sigma_px=20.0,
                                  seed=6, image_size=(64, 64))
        assert any(r.note == "clamped" for r in log.records)
        for lab in out.track.labels:
            cx, cy = lab.rect.center()
            assert 0 <= cx <= 64 and 0 <= cy <= 64

    def test_exactly_one_sigma_kind(self):
        with pytest.raises(ValidationError):
            inject_shifted(uniform_track(5), sigma_px=1.0, sigma_frac=0.1)
        with pytest.raises(ValidationError):
            inject_shifted(uniform_track(5))


class TestAdditionalRandom:
    def stats(self):
        return size_stats(uniform_track(5))

    def test_identity_at_zero(self):
        track = uniform_track(20)
        out, log = inject_additional_random(track, self.stats(), 0, (640, 512), seed=2)
        assert out == CorruptedLabels.from_track(track)
        assert log.records == ()

    def test_every_frame_gains_zero_iou_inside_box(self):
        track = uniform_track(10)
        out, log = inject_additional_random(track, self.stats(), 100, (640, 512), seed=2)
        assert len(log.frames("add")) == 10
        for t in range(10):
            extras = out.extra_boxes[t]
            assert len(extras) == 1
            box = extras[0]
            assert box.x >= 0 and box.y >= 0
            assert box.x + box.w <= 640 and box.y + box.h <= 512
            assert iou(box, track.labels[t].rect) == 0.0

    def test_exact_count(self):
        out, log = inject_additional_random(uniform_track(1000), self.stats(), 25,
                                            (640, 512), seed=3)
        frames = log.frames("add") + log.frames("skip")
        assert len(frames) == 250
        assert len(set(frames)) == 250

    def test_crowded_frame_skips_after_attempts(self):
        # annotation covers the whole image: no zero-IoU placement exists
        big = BoundingBox(0, 0, 64, 64)
        track = uniform_track(4, box=big)
        out, log = inject_additional_random(track, self.stats(), 100, (64, 64), seed=1)
        assert len(log.frames("skip")) == 4
        assert all(extras == () for extras in out.extra_boxes)


class TestAdditionalConsistent:
    def test_identity_at_zero(self, tmp_path):
        static_scene(tmp_path / "frames", 10)
        seq = FrameSequence(tmp_path / "frames")
        track = uniform_track(10)
        out, log = inject_additional_consistent(track, seq, size_stats(track), 0, seed=1)
        assert out == CorruptedLabels.from_track(track)

    def test_block_arithmetic(self, tmp_path):
        static_scene(tmp_path / "frames", 200, width=128, height=96,
                     center=(40.0, 30.0), box_size=16.0)
        track = uniform_track(200, box=BoundingBox(100, 70, 16, 16))
        out, log = inject_additional_consistent(
            track, FrameSequence(tmp_path / "frames"), size_stats(track), 25, seed=8)
        added = log.frames("add")
        assert added == list(range(75, 100)) + list(range(175, 200))

    def test_high_contrast_candidate_wins_and_tracking_is_stable(self, tmp_path):
        # flat background, one bright textured square: the only high-variance
        # region; candidates elsewhere have variance ~0
        width, height = 160, 120
        frame = np.full((height, width), 60, dtype=np.uint8)
        rng = np.random.default_rng(0)
        frame[40:80, 60:100] = rng.integers(0, 256, size=(40, 40), dtype=np.uint8)
        frames_dir = tmp_path / "frames"
        frames_dir.mkdir()
        for t in range(1, 101):
            write_pgm(frames_dir / f"{t:06d}.pgm", frame)
        track = uniform_track(100, box=BoundingBox(4, 4, 10, 10))
        stats = size_stats(uniform_track(5, box=BoundingBox(0, 0, 20, 20)))
        out, log = inject_additional_consistent(
            track, FrameSequence(frames_dir), stats, 25, seed=21)
        added = [r for r in log.records if r.kind == "add"]
        assert len(added) == 25
        first = BoundingBox(*added[0].after)
        # winner overlaps the high-contrast square
        assert iou(first, BoundingBox(60, 40, 40, 40)) > 0.0
        # static scene: the tracked box must not drift
        for rec in added:
            box = BoundingBox(*rec.after)
            assert abs(box.x - first.x) <= 1.0 and abs(box.y - first.y) <= 1.0


class TestCombinedAndLogs:
    def combined_recipe(self):
        return [MissingConsistent(p=25), AdditionalRandom(p=25),
                Shifted(sigma_frac=0.10)]

    def test_identity_spec(self):
        track = uniform_track(30)
        out, log = inject_combined(track, [Shifted(sigma_px=0.0)], seed=1,
                                   image_size=(640, 512))
        assert out.track == track

    def test_combined_recipe_on_300_frames(self):
        track = uniform_track(300)
        stats = size_stats(track)
        out, log = inject_combined(track, self.combined_recipe(), seed=77,
                                   stats=stats, image_size=(640, 512))
        hidden = {t for t, lab in enumerate(out.track.labels) if not lab.exist}
        assert hidden == set(range(75, 100)) | set(range(175, 200)) | set(range(275, 300))
        adds = log.frames("add") + [r.frame for r in log.records if r.kind == "skip"]
        assert len(adds) == 75
        # every surviving visible box was shifted
        shifted = set(log.frames("shift"))
        assert shifted == set(range(300)) - hidden
        # replaying the full log on the clean track reproduces the output
        assert apply_log(log, track) == out

    def test_missing_then_shifted_touches_only_survivors(self):
        track = uniform_track(100)
        out, log = inject_combined(track, [MissingConsistent(p=50), Shifted(sigma_px=2.0)],
                                   seed=3)
        assert set(log.frames("shift")) == set(range(0, 50))

    def test_determinism_bit_exact(self):
        track = uniform_track(120)
        stats = size_stats(track)
        runs = [
            inject_combined(track, self.combined_recipe(), seed=99,
                            stats=stats, image_size=(640, 512))
            for _ in range(2)
        ]
        assert runs[0][0] == runs[1][0]
        assert runs[0][1].to_json() == runs[1][1].to_json()

    def test_different_seeds_differ(self):
        track = uniform_track(120)
        a, _ = inject_shifted(track, sigma_px=2.0, seed=1)
        b, _ = inject_shifted(track, sigma_px=2.0, seed=2)
        assert a != b

    def test_log_replay_each_injector(self, tmp_path):
        track = uniform_track(60)
        stats = size_stats(track)
        box = static_scene(tmp_path / "frames", 60, width=128, height=96)
        seq = FrameSequence(tmp_path / "frames")
        cases = [
            inject_missing_consistent(track, 30),
            inject_missing_random(track, 30, seed=5),
            inject_shifted(track, sigma_px=2.5, seed=5, image_size=(128, 96)),
            inject_additional_random(track, stats, 40, (128, 96), seed=5),
            inject_additional_consistent(track, seq, stats, 20, seed=5),
        ]
        for out, log in cases:
            assert apply_log(log, track) == out
            # a serialization round trip must not disturb replay
            assert apply_log(InjectionLog.from_json(log.to_json()), track) == out

    def test_multibox_export_merges_extras(self):
        track = uniform_track(3)
        out, _ = inject_additional_random(track, size_stats(track), 100, (640, 512), seed=4)
        doc = __import__("json").loads(multibox_export(out))
        assert all(len(frame) == 2 for frame in doc["frames"])


class TestNoiseConfig:
    def test_parse_full_config(self):
        config = parse_noise_config(
            b'{"seed": 7, "specs": ['
            b'{"kind":"missing_consistent","p":25},'
            b'{"kind":"additional_random","p":25},'
            b'{"kind":"shifted","sigma_frac":0.1}]}')
        assert config.seed == 7
        assert config.specs == (MissingConsistent(p=25), AdditionalRandom(p=25),
                                Shifted(sigma_frac=0.1))

    def test_unknown_kind(self):
        with pytest.raises(ParseError):
            parse_noise_config(b'{"seed":1,"specs":[{"kind":"bogus"}]}')

    def test_unknown_key(self):
        with pytest.raises(ParseError):
            parse_noise_config(b'{"seed":1,"specs":[{"kind":"shifted","sigma_px":1,"zap":2}]}')

    def test_empty_specs(self):
        with pytest.raises(ValidationError):
            parse_noise_config(b'{"seed":1,"specs":[]}')
