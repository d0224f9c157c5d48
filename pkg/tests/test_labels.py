import io
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vessel_behavior import labels as lb
from vessel_behavior import segmentation as sg
from vessel_behavior import synth
from vessel_behavior.core import (
    STOPPED,
    BehaviorLabel,
    LabelSequence,
    Port,
    PositionPoint,
    PositionSequence,
    SubTrajectory,
    VesselType,
)
from vessel_behavior.geo import haversine, offset

CRUISE = BehaviorLabel.from_name("uniform_straight")
ORIGIN = (30.0, 122.0)


def _segment(offsets, behavior=STOPPED, mmsi="1", start=0, t0=1000):
    """Sub-trajectory through points placed at (north, east) metre offsets from ORIGIN."""
    pts = []
    for i, (dn, de) in enumerate(offsets):
        la, lo = offset(*ORIGIN, dn, de)
        pts.append(PositionPoint(mmsi, t0 + 10 * i, la, lo, 0.2, 0.0))
    return SubTrajectory(mmsi, start, start + len(pts) - 1, pts, behavior)


def _port(pid, dn, de, category="unassigned"):
    la, lo = offset(*ORIGIN, dn, de)
    return Port(pid, la, lo, category)


class TestFilterBehavior:
    def test_examples(self):
        segs = [_segment([(0, 0)] * 2, b, start=2 * i)
                for i, b in enumerate([CRUISE, STOPPED, CRUISE, STOPPED, CRUISE])]
        assert lb.filter_behavior(segs) == [segs[1], segs[3]]
        assert lb.filter_behavior(segs, lb.behavior_predicate("decelerating")) == []
        assert lb.filter_behavior(segs, lb.behavior_predicate("any")) == segs

    def test_predicates(self):
        assert lb.behavior_predicate("straight")(CRUISE)
        assert lb.behavior_predicate("uniform_straight")(CRUISE)
        assert not lb.behavior_predicate("uniform")(STOPPED)
        with pytest.raises(ValueError):
            lb.behavior_predicate("hovering")


class TestMatchDistance:
    def test_examples(self):
        assert lb.match_distance(10, 20, 10, 20) == 0.0
        assert lb.match_distance(0, 0, 0, 1) == pytest.approx(111195.08, abs=1.0)

    @given(st.floats(-80, 80), st.floats(-179, 179), st.floats(-80, 80), st.floats(-179, 179))
    def test_symmetric(self, a, b, c, d):
        assert lb.match_distance(a, b, c, d) == pytest.approx(lb.match_distance(c, d, a, b), abs=1e-6)


class TestSelectLabelPoint:
    def test_single_port_first_in_radius(self):
        seg = _segment([(0, -3000), (0, -1500), (0, -500), (0, -400), (0, 0)], start=7)
        reg = lb.PortRegistry([_port("P", 0, 0, "tanker")], sigma=1000)
        lp = lb.select_label_point(seg, reg, segment_index=4)
        assert lp.port_id == "P" and lp.port_label == "tanker" and lp.source_segment == 4
        assert lp.timestamp == seg.points[2].timestamp

    def test_no_port_in_range(self):
        seg = _segment([(0, 0), (0, 10)])
        reg = lb.PortRegistry([_port("P", 5000, 0)], sigma=1000)
        assert lb.select_label_point(seg, reg) is None
        assert lb.select_label_point(seg, lb.PortRegistry([], 1000)) is None

    def test_two_ports_middle_point_decides(self):
        # segment along the east axis; A at 200 m and B at 800 m north of its middle point
        seg = _segment([(0, e) for e in range(-600, 601, 100)])
        reg = lb.PortRegistry([_port("B", -800, 0), _port("A", 200, 0)], sigma=1200)
        lp = lb.select_label_point(seg, reg)
        lats = np.array([p.lat for p in seg.points])
        lons = np.array([p.lon for p in seg.points])
        # brute force over both ports
        best = None
        for port in reg.ports:
            d = haversine(lats, lons, port.lat, port.lon)
            hits = [i for i in range(len(d)) if d[i] < reg.sigma]
            if hits and (best is None or d[hits[len(hits) // 2]] < best[0]):
                best = (d[hits[len(hits) // 2]], port.id, hits[0])
        assert best[1] == "A" and lp.port_id == "A"
        assert lp.timestamp == seg.points[best[2]].timestamp

    @given(st.lists(st.tuples(st.floats(-3000, 3000), st.floats(-3000, 3000)), min_size=1, max_size=20),
           st.lists(st.tuples(st.floats(-3000, 3000), st.floats(-3000, 3000)), min_size=1, max_size=4),
           st.floats(1, 4000))
    def test_label_point_within_sigma(self, offsets, port_offsets, sigma):
        seg = _segment(offsets)
        reg = lb.PortRegistry([_port(f"P{i}", *o) for i, o in enumerate(port_offsets)], sigma)
        lp = lb.select_label_point(seg, reg)
        if lp is not None:
            port = reg.get(lp.port_id)
            assert lb.match_distance(lp.lat, lp.lon, port.lat, port.lon) <= sigma


class TestCategorize:
    def _matched(self, visits):
        """visits: list of (vessel type, port ids)."""
        reg = lb.PortRegistry([_port("P", 0, 0), _port("Q", 0, 9000)], 1000)
        matched = []
        for _, pids in visits:
            pts = []
            for pid in pids:
                lp = lb.select_label_point(_segment([(0, 0)] if pid == "P" else [(0, 9000)]), reg)
                pts.append(lp)
            matched.append(pts)
        return lb.categorize_berths(matched, [vt for vt, _ in visits], reg)

    def test_majority(self):
        reg = self._matched([(VesselType.TANKER, ["P"])] * 3 + [(VesselType.CONTAINER, ["P"])])
        assert reg.categories() == {"P": "tanker", "Q": "unassigned"}

    def test_tie_is_lexicographic(self):
        reg = self._matched([(VesselType.TANKER, ["P", "P"]), (VesselType.CONTAINER, ["P", "Q", "P"])])
        assert reg.categories() == {"P": "container", "Q": "container"}


class TestRegistry:
    def test_validation(self):
        with pytest.raises(ValueError):
            lb.PortRegistry([_port("P", 0, 0)], sigma=-1)
        with pytest.raises(ValueError):
            lb.PortRegistry([_port("P", 0, 0), _port("P", 10, 0)])
        with pytest.raises(KeyError):
            lb.PortRegistry([]).get("nope")

    def test_ports_file_round_trip(self):
        reg = synth.default_ports()
        buf = io.StringIO()
        lb.write_ports(reg, buf)
        buf.seek(0)
        assert lb.read_ports(buf, reg.sigma) == reg

    def test_ports_file_missing_column(self):
        with pytest.raises(ValueError, match="lon"):
            lb.read_ports(io.StringIO("port_id,lat\nA,1\n"))


@pytest.fixture(scope="module")
def fleet_labels():
    f = synth.gen_fleet({"ferry": 6, "liner": 4, "tramp": 4}, seed=11)
    segs = [sg.represent(t) for t in f.tracks]
    return f, segs


class TestBuild:
    def test_ferries_alternate_and_match_schedule(self, fleet_labels):
        f, segs = fleet_labels
        seqs, reg = lb.build_label_sequences(f.tracks, segs, f.registry)
        by_mmsi = {s.mmsi: s for s in seqs}
        for t, sched, arch in zip(f.tracks, f.schedules, f.archetypes):
            got = [p.port_id for p in by_mmsi[t.mmsi].label_points]
            assert got == sched
            if arch == "ferry":
                assert all(a != b for a, b in zip(got, got[1:])) and len(set(got)) <= 2
        assert reg.categories() == f.planted_categories
        for s in seqs:
            cats = reg.categories()
            assert all(p.port_label == cats[p.port_id] for p in s.label_points)
            assert [p.timestamp for p in s.label_points] == sorted(p.timestamp for p in s.label_points)

    def test_never_stopping_is_omitted_and_single_stop_kept(self):
        reg = lb.PortRegistry([_port("P", 0, 0, "tanker")], 1000)
        moving = PositionSequence("7", list(_segment([(0, 0)] * 3, CRUISE, mmsi="7").points))
        moored = PositionSequence("8", list(_segment([(0, 0)] * 3, mmsi="8").points))
        segs = [[_segment([(0, 0)] * 3, CRUISE, mmsi="7")], [_segment([(0, 0)] * 3, mmsi="8")]]
        seqs, _ = lb.build_label_sequences([moving, moored], segs, reg)
        assert [s.mmsi for s in seqs] == ["8"] and len(seqs[0]) == 1

    def test_permutation_invariant(self, fleet_labels):
        f, segs = fleet_labels
        base, _ = lb.build_label_sequences(f.tracks, segs, f.registry)
        order = list(range(len(f.tracks)))
        random.Random(0).shuffle(order)
        shuffled, _ = lb.build_label_sequences([f.tracks[i] for i in order], [segs[i] for i in order], f.registry)
        assert {s.mmsi: s for s in base} == {s.mmsi: s for s in shuffled}

    def test_shrinking_sigma_is_monotone(self, fleet_labels):
        f, segs = fleet_labels
        counts = []
        for sigma in (4000, 2000, 1000, 500, 100, 10, 0):
            seqs, _ = lb.build_label_sequences(f.tracks, segs, f.registry.with_sigma(sigma))
            counts.append(sum(len(s) for s in seqs))
        assert counts == sorted(counts, reverse=True)
        assert counts[-1] == 0

    def test_jsonl_round_trip(self, fleet_labels):
        f, segs = fleet_labels
        seqs, _ = lb.build_label_sequences(f.tracks, segs, f.registry)
        buf = io.StringIO()
        assert lb.write_label_sequences(seqs, buf) == len(seqs)
        buf.seek(0)
        assert lb.read_label_sequences(buf) == seqs
