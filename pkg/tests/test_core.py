import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vessel_behavior.core import (
    ALL_BEHAVIORS,
    N_BEHAVIORS,
    STOPPED,
    BehaviorLabel,
    PositionPoint,
    PositionSequence,
    SpeedStatus,
    SubTrajectory,
    TurnStatus,
    VesselType,
    concat_points,
    validate,
    wrap_degrees,
)


def _pt(t, lat=30.0, lon=122.0, sog=10.0, cog=90.0, mmsi="1"):
    return PositionPoint(mmsi, t, lat, lon, sog, cog)


class TestValidate:
    def test_lat_out_of_bounds_gives_one_violation(self):
        seq = PositionSequence("1", [_pt(0), _pt(10, lat=91.0), _pt(20)])
        report = validate(seq)
        assert report.kinds() == ["bounds"]
        assert report.violations[0].index == 1

    def test_well_formed_sequence_is_clean(self):
        seq = PositionSequence("1", [_pt(0), _pt(10), _pt(20)])
        report = validate(seq)
        assert len(report) == 0
        assert report

    def test_duplicate_timestamp_breaks_monotonicity(self):
        seq = PositionSequence("1", [_pt(0), _pt(10), _pt(10)])
        assert validate(seq).kinds() == ["monotonicity"]

    def test_mixed_mmsi_reported(self):
        seq = PositionSequence("1", [_pt(0), _pt(10, mmsi="2")])
        assert validate(seq).kinds() == ["mmsi"]

    @pytest.mark.parametrize("field,value", [("lon", 180.5), ("sog", -1.0), ("cog", 360.0),
                                             ("sog", float("nan")), ("lat", float("inf"))])
    def test_each_bound(self, field, value):
        kw = {field: value}
        seq = PositionSequence("1", [_pt(0, **kw)])
        assert validate(seq).kinds() == ["bounds"]


class TestBehaviorLabel:
    def test_exactly_ten_legal_labels(self):
        assert N_BEHAVIORS == 10
        assert len(set(ALL_BEHAVIORS)) == 10
        assert sorted(b.code for b in ALL_BEHAVIORS) == list(range(10))

    @pytest.mark.parametrize("code", range(10))
    def test_code_round_trip(self, code):
        b = BehaviorLabel.from_code(code)
        assert b.code == code
        assert BehaviorLabel.from_name(b.name) == b

    def test_stopped_has_no_turn(self):
        assert STOPPED.turn_status is TurnStatus.NONE
        assert STOPPED.name == "stopped"
        with pytest.raises(ValueError):
            BehaviorLabel(SpeedStatus.STOPPED, TurnStatus.LEFT)

    @pytest.mark.parametrize("speed", [SpeedStatus.ACCELERATING, SpeedStatus.DECELERATING, SpeedStatus.UNIFORM])
    def test_moving_needs_turn(self, speed):
        with pytest.raises(ValueError):
            BehaviorLabel(speed, TurnStatus.NONE)

    def test_names(self):
        assert BehaviorLabel(SpeedStatus.ACCELERATING, TurnStatus.RIGHT).name == "accelerating_right"
        assert BehaviorLabel.from_code(0).name == "accelerating_left"

    @pytest.mark.parametrize("code", [-1, 10])
    def test_bad_code(self, code):
        with pytest.raises(ValueError):
            BehaviorLabel.from_code(code)

    @given(st.sampled_from(list(SpeedStatus)), st.sampled_from(list(TurnStatus)))
    def test_legality_rule(self, speed, turn):
        legal = (speed is SpeedStatus.STOPPED) == (turn is TurnStatus.NONE)
        if legal:
            assert BehaviorLabel(speed, turn) in ALL_BEHAVIORS
        else:
            with pytest.raises(ValueError):
                BehaviorLabel(speed, turn)


class TestVesselType:
    @pytest.mark.parametrize("raw,expected", [
        ("container", VesselType.CONTAINER), ("Tanker", VesselType.TANKER), ("70", VesselType.CARGO),
        ("84", VesselType.TANKER), ("60", VesselType.PASSENGER), ("30", VesselType.FISHING),
        ("52", VesselType.TUG), ("999", VesselType.OTHER), ("submarine", VesselType.OTHER), (None, VesselType.OTHER),
    ])
    def test_parse(self, raw, expected):
        assert VesselType.parse(raw) is expected


class TestSequences:
    def test_arrays_and_slice(self):
        seq = PositionSequence.from_arrays("9", [0, 10, 20], [1, 2, 3], [4, 5, 6], [7, 8, 9], [0, 90, 180])
        np.testing.assert_array_equal(seq.timestamps, [0, 10, 20])
        np.testing.assert_array_equal(seq.sog, [7, 8, 9])
        part = seq.slice(1, 2)
        assert len(part) == 2 and part.points[0].timestamp == 10

    def test_subtrajectory_index_checks(self):
        seq = PositionSequence("1", [_pt(0), _pt(10)])
        with pytest.raises(ValueError):
            SubTrajectory("1", 1, 0, ())
        with pytest.raises(ValueError):
            SubTrajectory("1", 0, 1, seq.points[:1])

    @given(st.lists(st.integers(min_value=1, max_value=8), min_size=1, max_size=8))
    def test_concatenating_slices_reproduces_parent(self, lengths):
        n = sum(lengths)
        seq = PositionSequence("1", [_pt(10 * i) for i in range(n)])
        segs, start = [], 0
        for k in lengths:
            segs.append(SubTrajectory("1", start, start + k - 1, seq.points[start:start + k]))
            start += k
        assert concat_points(segs) == seq.points


class TestWrap:
    @pytest.mark.parametrize("delta,expected", [(20, 20), (-340, 20), (180, 180), (-180, 180), (540, 180), (359, -1)])
    def test_values(self, delta, expected):
        assert wrap_degrees(delta) == pytest.approx(expected)

    @given(st.floats(min_value=-1e4, max_value=1e4, allow_nan=False))
    def test_range_and_congruence(self, x):
        w = wrap_degrees(x)
        assert -180.0 < w <= 180.0
        k = (x - w) / 360.0
        assert abs(k - round(k)) < 1e-9
