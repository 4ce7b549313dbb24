import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skelkit.errors import ValidationError
from skelkit.synth import SynthScene, generate_hand_detections
from skelkit.track import (Detection, HoiConfig, OneEuroParams, TrackEntry,
                           Tracklet, box_iou, build_tracklets,
                           build_tracklets_external, fill_gaps,
                           handedness_filter, merge_tracklets,
                           number_of_hands_filter, one_euro, one_euro_alpha,
                           propagate_track, run_hoi_pipeline)
from skelkit.track import _entry_from


def det(frame, box, conf=0.9, hand="left", joints=None, track_id=None):
    return Detection(frame, box, conf, hand, joints2d=joints, track_id=track_id)


def stationary_stream(box, frames, hand="left", conf=0.9):
    return [det(f, box, conf, hand) for f in frames]


def by_frame(dets):
    grouped = {}
    for d in dets:
        grouped.setdefault(d.frame_index, []).append(d)
    return grouped


class TestBoxIou:
    def test_identical(self):
        assert box_iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0

    def test_disjoint(self):
        assert box_iou((0, 0, 10, 10), (20, 20, 30, 30)) == 0.0

    def test_known_overlap(self):
        # inter 50, union 150
        assert box_iou((0, 0, 10, 10), (5, 0, 15, 10)) == pytest.approx(1 / 3)

    @settings(max_examples=50, deadline=None)
    @given(st.tuples(*[st.floats(0, 100) for _ in range(8)]))
    def test_symmetric_and_bounded(self, vals):
        a = (min(vals[0], vals[1]), min(vals[2], vals[3]),
             max(vals[0], vals[1]) + 1, max(vals[2], vals[3]) + 1)
        b = (min(vals[4], vals[5]), min(vals[6], vals[7]),
             max(vals[4], vals[5]) + 1, max(vals[6], vals[7]) + 1)
        iou = box_iou(a, b)
        assert iou == box_iou(b, a)
        assert 0.0 <= iou <= 1.0
        assert box_iou(a, a) == 1.0


class TestPropagateTrack:
    def test_stationary_full_coverage(self):
        dets = stationary_stream((10, 10, 50, 50), range(10))
        t = propagate_track(dets[4], by_frame(dets))
        assert t.frames == list(range(10))

    def test_constant_velocity_follows_motion(self):
        # 40x40 box moving +5 px/frame: prediction overlaps at IoU ~0.88
        dets = [det(f, (f * 5, 0, f * 5 + 40, 40)) for f in range(20)]
        t = propagate_track(dets[0], by_frame(dets), theta_iou=0.5)
        assert t.frames == list(range(20))

    def test_terminates_after_gap_limit(self):
        frames = list(range(5)) + list(range(20, 25))
        dets = stationary_stream((0, 0, 40, 40), frames)
        t = propagate_track(dets[0], by_frame(dets), gap_limit=10)
        assert t.frames == list(range(5))

    def test_backward_extension(self):
        dets = stationary_stream((0, 0, 40, 40), range(10))
        t = propagate_track(dets[-1], by_frame(dets))
        assert t.frames == list(range(10))


class TestBuildTracklets:
    def test_single_detection(self):
        tracklets, assoc = build_tracklets([det(3, (0, 0, 10, 10))])
        assert len(tracklets) == 1
        assert tracklets[0].frames == [3]
        assert len(assoc[tracklets[0].id]) == 1

    def test_two_separated_hands(self):
        dets = (stationary_stream((0, 0, 40, 40), range(20), "left")
                + stationary_stream((100, 0, 140, 40), range(20), "right"))
        tracklets, assoc = build_tracklets(dets)
        assert len(tracklets) == 2
        assert sum(len(v) for v in assoc.values()) == 40

    def test_duplicate_does_not_seed(self):
        dets = stationary_stream((0, 0, 40, 40), range(5), conf=0.9)
        dets.append(det(2, (0, 0, 40, 40), conf=0.5))
        tracklets, _ = build_tracklets(dets)
        assert len(tracklets) == 1

    def test_order_independent_for_equal_confidence(self):
        dets = (stationary_stream((0, 0, 40, 40), range(5), "left", 0.8)
                + stationary_stream((100, 0, 140, 40), range(5), "right", 0.8))
        t1, _ = build_tracklets(list(dets))
        t2, _ = build_tracklets(list(reversed(dets)))
        sig1 = sorted(tuple(t.frames) + t.entries[0].box for t in t1)
        sig2 = sorted(tuple(t.frames) + t.entries[0].box for t in t2)
        assert sig1 == sig2

    def test_empty_stream(self):
        assert build_tracklets([]) == ([], {})

    def test_association_predicate_holds(self):
        dets = (stationary_stream((0, 0, 40, 40), range(10))
                + [det(5, (10, 0, 50, 40), conf=0.4)])
        tracklets, assoc = build_tracklets(dets, theta_iou=0.5)
        lookup = {t.id: t for t in tracklets}
        for tid, pairs in assoc.items():
            for f, d in pairs:
                assert box_iou(d.box, lookup[tid].box_at(f)) >= 0.5


class TestHandednessFilter:
    def test_pure_tracklet_unchanged(self):
        dets = stationary_stream((0, 0, 40, 40), range(10), "left")
        tracklets, assoc = build_tracklets(dets)
        kept = handedness_filter(tracklets, assoc)
        assert len(kept) == 1
        assert kept[0].handedness == "left"

    def test_weighted_majority_and_minority_removal(self):
        dets = [det(f, (0, 0, 40, 40), 0.9, "left") for f in range(9)]
        dets.append(det(9, (0, 0, 40, 40), 0.9, "right"))
        tracklets, assoc = build_tracklets(dets)
        kept = handedness_filter(tracklets, assoc)
        assert kept[0].handedness == "left"
        assert all(d.handedness == "left" for _, d in assoc[kept[0].id])

    def test_ambiguous_tracklet_dropped(self):
        dets = [det(f, (0, 0, 40, 40), 0.8, "left" if f % 2 else "right")
                for f in range(10)]
        tracklets, assoc = build_tracklets(dets)
        assert handedness_filter(tracklets, assoc, h_min=0.6) == []


class TestMergeTracklets:
    def _tracklet(self, tid, frames, box, hand="left"):
        dets = stationary_stream(box, frames, hand)
        return Tracklet(tid, [_entry_from(d) for d in dets], handedness=hand)

    def test_far_apart_unchanged(self):
        a = self._tracklet(0, range(0, 5), (0, 0, 40, 40))
        b = self._tracklet(1, range(50, 55), (0, 0, 40, 40))
        assert len(merge_tracklets([a, b], None, merge_gap=15)) == 2

    def test_split_trajectory_merges(self):
        a = self._tracklet(0, range(0, 10), (0, 0, 40, 40))
        b = self._tracklet(1, range(13, 20), (0, 0, 40, 40))
        merged = merge_tracklets([a, b], None, merge_gap=10)
        assert len(merged) == 1
        assert merged[0].frames == list(range(0, 10)) + list(range(13, 20))
        assert merged[0].source == "merged"

    def test_opposite_handedness_not_merged(self):
        a = self._tracklet(0, range(0, 10), (0, 0, 40, 40), "left")
        b = self._tracklet(1, range(13, 20), (0, 0, 40, 40), "right")
        assert len(merge_tracklets([a, b], None)) == 2

    def test_transitive_merge(self):
        a = self._tracklet(0, range(0, 5), (0, 0, 40, 40))
        b = self._tracklet(1, range(8, 12), (0, 0, 40, 40))
        c = self._tracklet(2, range(15, 20), (0, 0, 40, 40))
        assert len(merge_tracklets([a, b, c], None, merge_gap=5)) == 1

    def test_overlap_keeps_higher_confidence(self):
        a = self._tracklet(0, range(0, 6), (0, 0, 40, 40))
        dets = [det(f, (1, 0, 41, 40), 0.99) for f in range(4, 10)]
        b = Tracklet(1, [_entry_from(d) for d in dets], handedness="left")
        merged = merge_tracklets([a, b], None)[0]
        assert merged.entry_at(5).confidence == 0.99


class TestNumberOfHandsFilter:
    def test_one_per_hand_unchanged(self):
        dets = (stationary_stream((0, 0, 40, 40), range(10), "left")
                + stationary_stream((100, 0, 140, 40), range(10), "right"))
        tracklets, assoc = build_tracklets(dets)
        kept = handedness_filter(tracklets, assoc)
        assert len(number_of_hands_filter(kept)) == 2

    def test_longest_left_survives(self):
        lengths = (50, 10, 5)
        tracklets = []
        for i, n in enumerate(lengths):
            dets = stationary_stream((200 * i, 0, 200 * i + 40, 40), range(n))
            tracklets.append(Tracklet(i, [_entry_from(d) for d in dets],
                                      handedness="left"))
        kept = number_of_hands_filter(tracklets, max_per_hand=1)
        assert len(kept) == 1
        assert len(kept[0].entries) == 50

    def test_empty(self):
        assert number_of_hands_filter([]) == []


class TestFillGaps:
    def _tracklet(self, frames_boxes, joints=None):
        entries = [TrackEntry(f, b, 0.9, "left",
                              None if joints is None else joints[i])
                   for i, (f, b) in enumerate(frames_boxes)]
        return Tracklet(0, entries, handedness="left")

    def test_gapless_unchanged(self):
        t = self._tracklet([(0, (0, 0, 10, 10)), (1, (0, 0, 10, 10))])
        out = fill_gaps(t)
        assert out.frames == [0, 1]
        assert not any(e.interpolated for e in out.entries)

    def test_midpoint_interpolation(self):
        t = self._tracklet([(0, (0, 0, 10, 10)), (2, (10, 0, 20, 10))])
        out = fill_gaps(t)
        mid = out.entry_at(1)
        assert mid.interpolated
        assert mid.box == pytest.approx((5, 0, 15, 10))

    def test_joints_interpolated(self):
        joints = [np.zeros((21, 2)), np.full((21, 2), 4.0)]
        t = self._tracklet([(0, (0, 0, 10, 10)), (2, (0, 0, 10, 10))], joints)
        out = fill_gaps(t)
        assert np.allclose(out.entry_at(1).joints2d, 2.0)

    def test_long_gap_untouched(self):
        t = self._tracklet([(0, (0, 0, 10, 10)), (14, (0, 0, 10, 10))])
        out = fill_gaps(t, max_gap=12)
        assert out.frames == [0, 14]

    def test_non_gap_entries_unmodified(self):
        t = self._tracklet([(0, (0, 0, 10, 10)), (2, (10, 0, 20, 10))])
        out = fill_gaps(t)
        assert out.entry_at(0) is t.entries[0]
        assert out.entry_at(2) is t.entries[1]


class TestOneEuro:
    def test_constant_series_fixed_point(self):
        x = np.full(50, 3.25)
        assert np.array_equal(one_euro(x), x)

    def test_first_sample_passthrough(self, rng):
        x = rng.normal(size=20)
        assert one_euro(x)[0] == x[0]

    def test_alpha_formula(self):
        # tau = 1/(2*pi) ~ 0.159155; alpha = 1/(1 + tau*30)
        expected = 1.0 / (1.0 + 30.0 / (2.0 * math.pi))
        assert one_euro_alpha(1.0, 30.0) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.17317, abs=1e-5)

    def test_beta_zero_matches_fixed_exponential(self, rng):
        x = rng.normal(size=100)
        params = OneEuroParams(min_cutoff=1.3, beta=1e-12, d_cutoff=1.0, rate=30)
        out = one_euro(x, params)
        a = one_euro_alpha(1.3, 30)
        ref = np.empty_like(x)
        ref[0] = x[0]
        for i in range(1, len(x)):
            ref[i] = a * x[i] + (1 - a) * ref[i - 1]
        assert np.abs(out - ref).max() <= 1e-9

    def test_noisy_constant_variance_reduced(self):
        reduced = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            x = 5.0 + rng.normal(0, 1.0, 200)
            y = one_euro(x)
            if np.mean((y - 5.0) ** 2) < np.mean((x - 5.0) ** 2):
                reduced += 1
        assert reduced == 100

    def test_vector_series_shape(self, rng):
        x = rng.normal(size=(30, 4))
        assert one_euro(x).shape == (30, 4)

    def test_nonpositive_params_rejected(self):
        with pytest.raises(ValidationError):
            OneEuroParams(min_cutoff=0.0)


def identity_accuracy(result, truth, theta=0.5):
    """Fraction of ground-truth hand frames covered with a matching box."""
    total = correct = 0
    for hand in ("left", "right"):
        gt_boxes = truth[hand]["boxes"]
        tracklet = next((t for t in result.tracklets if t.handedness == hand),
                        None)
        for f in range(len(gt_boxes)):
            total += 1
            if tracklet is None:
                continue
            e = tracklet.entry_at(f)
            if e is not None and box_iou(e.box, tuple(gt_boxes[f])) >= theta:
                correct += 1
    return correct / total


class TestHoiPipeline:
    def test_clean_stream_exact_recovery(self):
        scene = SynthScene(seed=5, n_frames=40)
        detections, truth = generate_hand_detections(scene)
        result = run_hoi_pipeline(detections)
        assert sorted(t.handedness for t in result.tracklets) == ["left", "right"]
        for t in result.tracklets:
            assert t.frames == list(range(scene.n_frames))
            gt_boxes = truth[t.handedness]["boxes"]
            for e in t.entries:
                assert e.box == pytest.approx(tuple(gt_boxes[e.frame_index]))

    def test_empty_stream(self):
        result = run_hoi_pipeline([])
        assert result.tracklets == [] and result.joints_by_hand == {}

    def test_corrupted_stream_accuracy(self):
        scene = SynthScene(seed=17, n_frames=60, dropout_rate=0.1,
                           spurious_rate=0.05, jitter_sigma=1.0)
        detections, truth = generate_hand_detections(scene)
        result = run_hoi_pipeline(detections)
        assert identity_accuracy(result, truth) >= 0.95
        hands = [t.handedness for t in result.tracklets]
        assert len(hands) == len(set(hands))  # at most one per handedness

    def test_idempotent_on_clean_static_tracklets(self):
        joints = np.tile(np.linspace(0, 20, 42).reshape(21, 2), (1, 1))
        dets = [det(f, (0, 0, 40, 40), 0.9, "left", joints=joints.copy())
                for f in range(20)]
        first = run_hoi_pipeline(dets)
        redets = [det(e.frame_index, e.box, e.confidence, t.handedness,
                      joints=e.joints2d)
                  for t in first.tracklets for e in t.entries]
        second = run_hoi_pipeline(redets)
        for t1, t2 in zip(first.tracklets, second.tracklets):
            assert t1.frames == t2.frames
            for e1, e2 in zip(t1.entries, t2.entries):
                assert e1.box == pytest.approx(e2.box)
                assert np.allclose(e1.joints2d, e2.joints2d)

    def test_external_track_backend(self):
        dets = ([det(f, (0, 0, 40, 40), 0.9, "left", track_id=0)
                 for f in range(10)]
                + [det(f, (100, 0, 140, 40), 0.9, "right", track_id=1)
                   for f in range(10)])
        cfg = HoiConfig(use_external_tracks=True)
        result = run_hoi_pipeline(dets, cfg)
        assert sorted(t.handedness for t in result.tracklets) == ["left", "right"]

    def test_external_backend_requires_ids(self):
        with pytest.raises(ValidationError):
            build_tracklets_external([det(0, (0, 0, 10, 10))])
