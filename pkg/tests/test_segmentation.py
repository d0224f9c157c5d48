import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_track
from vessel_behavior import segmentation as sg
from vessel_behavior import synth
from vessel_behavior.core import (
    ALL_BEHAVIORS,
    PositionSequence,
    SpeedStatus,
    TurnStatus,
    concat_points,
)

CFG = sg.SegmenterConfig()


def _random_track(rng, n):
    sog = np.abs(rng.normal(8, 6, n).cumsum() / np.sqrt(np.arange(1, n + 1)))
    cog = rng.uniform(0, 360) + rng.normal(0, 5, n).cumsum()
    return make_track(sog, cog)


class TestPreChangePoints:
    @pytest.mark.parametrize("n,expected", [(100, [20, 40, 60, 80]), (39, []), (60, [20, 40]), (40, [20]), (0, [])])
    def test_examples(self, n, expected):
        assert sg.pre_change_points(n, 20) == expected

    @given(st.integers(0, 500), st.integers(2, 50))
    def test_general_form(self, n, u):
        pre = sg.pre_change_points(n, u)
        assert pre == [u * k for k in range(1, n // u)]
        assert all(u <= p <= n - u for p in pre)


class TestWindowFeatures:
    def test_constant(self):
        np.testing.assert_array_equal(sg.window_features([10] * 5, [90] * 5), [10, 0, 0, 0])

    def test_circular_net_change(self):
        f = sg.window_features([1, 1], [350, 10])
        assert f[2] == pytest.approx(20.0) and f[3] == pytest.approx(20.0)

    def test_population_std(self):
        f = sg.window_features([8, 10, 12], [0, 0, 0])
        assert f[0] == pytest.approx(10.0)
        # population variance of (8, 10, 12) is (4 + 0 + 4) / 3
        assert f[1] == pytest.approx(math.sqrt(8 / 3))

    def test_degenerate(self):
        with pytest.raises(sg.DegenerateSegmentError):
            sg.window_features([1.0], [0.0])


class TestScores:
    def test_stationary_both_sides_zero(self):
        T = make_track([0.0] * 100, [45.0] * 100)
        _, scores = sg.change_point_scores(T, CFG)
        np.testing.assert_array_equal(scores, 0.0)

    def test_cruise_then_stop_beats_same_behavior(self):
        T = make_track([10.0] * 100 + [0.0] * 100, [90.0] * 200)
        cands, scores = sg.change_point_scores(T, CFG)
        at = scores[cands.index(100)]
        w = CFG.lam * CFG.u
        same = [s for c, s in zip(cands, scores) if c + w <= 100 or c - w >= 100]
        assert same and at > max(same)
        assert sg.change_point_score(T, 100, CFG.lam, CFG.u) == pytest.approx(at)

    @given(st.integers(0, 2**31 - 1), st.integers(3, 12))
    def test_reversal_symmetry(self, seed, k):
        # reversing the track swaps left and right windows; the distance is symmetric
        rng = np.random.default_rng(seed)
        n = k * CFG.u + 1
        T = _random_track(rng, n)
        R = make_track(T.sog[::-1], T.cog[::-1])
        c1, s1 = sg.change_point_scores(T, CFG)
        c2, s2 = sg.change_point_scores(R, CFG)
        assert c1 == [n - 1 - c for c in c2[::-1]]
        np.testing.assert_allclose(s1, s2[::-1], rtol=1e-9, atol=1e-12)

    @given(st.integers(0, 2**31 - 1), st.floats(-10, 10), st.floats(-10, 10), st.integers(-10**6, 10**6))
    def test_translation_invariance(self, seed, dlat, dlon, dt):
        rng = np.random.default_rng(seed)
        T = _random_track(rng, 120)
        moved = PositionSequence.from_arrays(T.mmsi, T.timestamps + dt, T.lat + dlat, T.lon + dlon, T.sog, T.cog)
        np.testing.assert_array_equal(sg.change_point_scores(T, CFG)[1], sg.change_point_scores(moved, CFG)[1])

    @given(st.integers(0, 10_000))
    def test_planted_boundary_outscores_same_regime(self, seed):
        rt = synth.planted_regime_track(seed, noise=0.5)
        cands, scores = sg.change_point_scores(rt.sequence, CFG)
        w = CFG.lam * CFG.u
        edges = [0, *rt.boundaries, len(rt.sequence)]
        same = [s for c, s in zip(cands, scores)
                if any(a <= c - w and c + w <= b for a, b in zip(edges[:-1], edges[1:]))]
        for b in rt.boundaries:
            near = [s for c, s in zip(cands, scores) if abs(c - b) <= w]
            assert max(near) > max(same, default=0.0)


class TestSelectPeaks:
    def test_radius_zero_keeps_all(self):
        assert sg.select_peaks(np.array([1.0, 2.0, 3.0]), 0).all()

    def test_local_maxima_and_ties(self):
        keep = sg.select_peaks(np.array([1.0, 3.0, 2.0, 2.0, 5.0, 5.0]), 1)
        assert keep.tolist() == [False, True, False, False, True, False]


class TestSegment:
    def test_infinite_delta_single_segment(self):
        T = _random_track(np.random.default_rng(0), 200)
        cfg = sg.config_with(CFG, delta="inf")
        (only,) = sg.segment(T, cfg)
        assert only.start_index == 0 and only.end_index == 199 and only.points == T.points

    def test_planted_three_regimes(self):
        agree = total = 0
        for seed in range(10):
            rt = synth.planted_regime_track(seed)
            cuts = sg.ChangePointSegmenter(CFG).cut_points(rt.sequence)
            tol = CFG.lam * CFG.u
            assert all(any(abs(c - b) <= tol for c in cuts) for b in rt.boundaries)
            codes = sg.point_labels(rt.sequence, sg.represent(rt.sequence, CFG))
            agree += int((codes == rt.labels).sum())
            total += len(codes)
        # cuts sit on the u-grid, so slivers next to boundaries may disagree
        assert agree / total >= 0.9

    @pytest.mark.parametrize("search", ["recursive", "threshold"])
    def test_zero_delta_cuts_every_candidate(self, search):
        T = _random_track(np.random.default_rng(3), 157)
        cfg = sg.config_with(CFG, delta=0.0, search=search)
        segs = sg.segment(T, cfg)
        assert len(segs) == len(sg.pre_change_points(T, CFG.u)) + 1

    def test_short_track_single_segment(self):
        T = make_track([5.0] * 30, [0.0] * 30)
        assert len(sg.segment(T, CFG)) == 1
        assert sg.segment(PositionSequence("x", []), CFG) == []

    @given(st.integers(0, 2**31 - 1), st.integers(1, 300), st.floats(0, 3))
    def test_exhaustive_and_exclusive(self, seed, n, delta):
        T = _random_track(np.random.default_rng(seed), n)
        segs = sg.segment(T, sg.config_with(CFG, delta=delta))
        assert concat_points(segs) == T.points
        for a, b in zip(segs, segs[1:]):
            assert b.start_index == a.end_index + 1

    @given(st.integers(0, 2**31 - 1), st.floats(0, 4), st.floats(0, 4))
    def test_monotone_in_delta(self, seed, d1, d2):
        lo, hi = sorted((d1, d2))
        T = _random_track(np.random.default_rng(seed), 240)
        for search in ("recursive", "threshold"):
            a = sg.segment(T, sg.config_with(CFG, delta=lo, search=search))
            b = sg.segment(T, sg.config_with(CFG, delta=hi, search=search))
            assert len(b) <= len(a)


class TestClassify:
    def test_stop_rule(self):
        assert sg.classify_speed(([5, 5, 5, 5], [0] * 4)) is SpeedStatus.STOPPED

    def test_eighty_percent_rule(self):
        assert sg.classify_speed(([12, 13, 14, 15, 16], [0] * 5)) is SpeedStatus.ACCELERATING
        assert sg.classify_speed(([16, 15, 14, 13, 12], [0] * 5)) is SpeedStatus.DECELERATING
        # 4 of 5 diffs positive is exactly 80 %
        assert sg.classify_speed(([12, 13, 14, 15, 16, 15.9], [0] * 6)) is SpeedStatus.ACCELERATING

    def test_uniform(self):
        assert sg.classify_speed(([20, 20.1, 19.9, 20], [0] * 4)) is SpeedStatus.UNIFORM

    def test_end_minus_start_fallback(self):
        sog = [12, 16, 12, 16, 12, 17]
        assert sg.classify_speed((sog, [0] * 6)) is SpeedStatus.ACCELERATING
        assert sg.classify_speed((sog[::-1], [0] * 6)) is SpeedStatus.DECELERATING
        assert sg.classify_speed(([12, 16, 12, 16, 12], [0] * 5)) is SpeedStatus.UNIFORM

    def test_turns(self):
        assert sg.classify_turn(([15, 15], [90, 90])) is TurnStatus.STRAIGHT
        cfg = sg.SegmenterConfig(turn_threshold=20)
        assert sg.classify_turn(([15, 15], [90, 130]), cfg) is TurnStatus.RIGHT
        assert sg.classify_turn(([15, 15], [10, 350]), cfg) is TurnStatus.STRAIGHT
        assert sg.classify_turn(([15, 15], [10, 349]), cfg) is TurnStatus.LEFT
        assert sg.classify_turn(([15, 15], [350, 11]), cfg) is TurnStatus.RIGHT

    def test_turn_on_stopped_is_contract_violation(self):
        with pytest.raises(ValueError):
            sg.classify_turn(([1, 1], [0, 90]))

    def test_stopped_label(self):
        b = sg.classify(([1, 2, 1], [0, 90, 180]))
        assert b.speed_status is SpeedStatus.STOPPED and b.turn_status is TurnStatus.NONE

    def test_ten_archetypes(self):
        for r in synth.behavior_archetypes(100):
            rt = synth.gen_regime_track([r], noise=0.3, seed=1)
            assert sg.classify(rt.sequence) == r.label

    def test_degenerate(self):
        with pytest.raises(sg.DegenerateSegmentError):
            sg.classify(([10.0], [0.0]))

    @given(st.lists(st.tuples(st.floats(0, 40), st.floats(0, 359.99)), min_size=2, max_size=40))
    def test_total_function(self, rows):
        sog, cog = zip(*rows)
        assert sg.classify((sog, cog)) in ALL_BEHAVIORS


class TestRepresent:
    def test_merge_runs(self):
        T = make_track([15.0] * 120, [90.0] * 120)
        segs = sg.label(sg.split_at(T, [40, 80]))
        merged = sg.merge_runs(segs)
        assert len(segs) == 3 and len(merged) == 1
        assert merged[0].points == T.points

    def test_point_labels(self):
        T = make_track([15.0] * 40 + [0.0] * 40, [90.0] * 80)
        segs = sg.represent(T)
        codes = sg.point_labels(T, segs)
        assert codes.shape == (80,) and codes[-1] == 9 and codes[0] == 8

    def test_jsonl_round_trip(self):
        seqs = [synth.planted_regime_track(s, mmsi=f"10000000{s}").sequence for s in range(3)]
        per = [sg.represent(t) for t in seqs]
        buf = io.StringIO()
        n = sg.write_segments(per, buf)
        assert n == sum(len(p) for p in per)
        first = buf.getvalue().splitlines()[0]
        assert set(eval_json(first)) >= {"mmsi", "start", "end", "behavior"}
        buf.seek(0)
        assert sg.read_segments(buf, seqs) == per

    def test_config_validation(self):
        with pytest.raises(ValueError):
            sg.SegmenterConfig(u=1)
        with pytest.raises(ValueError):
            sg.SegmenterConfig(speed_sign_fraction=0.5)
        with pytest.raises(ValueError):
            sg.SegmenterConfig(turn_threshold=0)
        with pytest.raises(ValueError):
            sg.SegmenterConfig(search="greedy")
        assert sg.config_with(CFG, delta="inf").delta == math.inf
        assert sg.config_with(CFG, u=None).u == CFG.u


def eval_json(line):
    import json

    return json.loads(line)
