"""Label sequences: map behavior segments (moorings by default) to ports.

Ports get a category from the vessel types that moor there; each label point
inherits its port's category as the mooring-preference label.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, replace
from typing import IO, Callable, Iterable, Sequence

import numpy as np

from .core import (
    STOPPED,
    BehaviorLabel,
    LabelPoint,
    LabelSequence,
    Port,
    PositionSequence,
    SpeedStatus,
    SubTrajectory,
    VesselType,
)
from .geo import haversine

logger = logging.getLogger(__name__)

UNASSIGNED = "unassigned"

BehaviorPredicate = Callable[[BehaviorLabel], bool]


def is_stopped(b: BehaviorLabel) -> bool:
    return b.speed_status is SpeedStatus.STOPPED


def behavior_predicate(spec: str) -> BehaviorPredicate:
    """Build a predicate from a name: ``any``, a speed status, a turn status or a full label."""
    spec = spec.strip().lower()
    if spec == "any":
        return lambda b: True
    if spec in {s.value for s in SpeedStatus}:
        return lambda b: b.speed_status.value == spec
    if spec in ("left", "right", "straight"):
        return lambda b: b.turn_status.value == spec
    target = BehaviorLabel.from_name(spec)
    return lambda b: b == target


@dataclass(frozen=True)
class PortRegistry:
    ports: tuple[Port, ...]
    sigma: float = 2000.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "ports", tuple(self.ports))
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        ids = [p.id for p in self.ports]
        if len(set(ids)) != len(ids):
            raise ValueError("port ids must be unique")
        for p in self.ports:
            if not (-90 <= p.lat <= 90 and -180 <= p.lon <= 180):
                raise ValueError(f"port {p.id} outside coordinate bounds")

    def get(self, port_id: str) -> Port:
        for p in self.ports:
            if p.id == port_id:
                return p
        raise KeyError(port_id)

    def with_sigma(self, sigma: float) -> "PortRegistry":
        return replace(self, sigma=sigma)

    def categories(self) -> dict[str, str]:
        return {p.id: p.category for p in self.ports}


def filter_behavior(segments: Iterable[SubTrajectory], predicate: BehaviorPredicate = is_stopped) -> list[SubTrajectory]:
    return [s for s in segments if s.behavior is not None and predicate(s.behavior)]


def match_distance(lat1, lon1, lat2, lon2) -> float:
    """Haversine distance in meters between a point and a port."""
    return haversine(lat1, lon1, lat2, lon2)


def select_label_point(segment: SubTrajectory, registry: PortRegistry,
                       segment_index: int = 0) -> LabelPoint | None:
    """Pick the label point of one segment, or None when no port lies within sigma.

    With one matching port the first in-radius point is used. With several,
    each port is scored by the distance of its middle in-radius point and the
    closest port wins; the label point is still that port's first match.
    """
    if not registry.ports or len(segment) == 0:
        return None
    lat = np.array([p.lat for p in segment.points])
    lon = np.array([p.lon for p in segment.points])
    best = None
    for port in registry.ports:
        d = np.atleast_1d(match_distance(lat, lon, port.lat, port.lon))
        hits = np.flatnonzero(d < registry.sigma)
        if len(hits) == 0:
            continue
        mid_dist = d[hits[len(hits) // 2]]
        if best is None or mid_dist < best[0]:
            best = (mid_dist, port, hits[0])
    if best is None:
        return None
    _, port, first = best
    p = segment.points[first]
    return LabelPoint(segment_index, p.lat, p.lon, p.timestamp, port.id, port.category)


def match_moorings(
    sequences: Sequence[PositionSequence],
    segments: Sequence[Sequence[SubTrajectory]],
    registry: PortRegistry,
    predicate: BehaviorPredicate = is_stopped,
) -> list[list[LabelPoint]]:
    """Label points per track, port labels not yet filled in."""
    out = []
    for seq, segs in zip(sequences, segments):
        pts = []
        for i, s in enumerate(segs):
            if s.behavior is None or not predicate(s.behavior):
                continue
            lp = select_label_point(s, registry, i)
            if lp is not None:
                pts.append(lp)
        out.append(pts)
    return out


def categorize_berths(
    matched: Sequence[Sequence[LabelPoint]],
    vessel_types: Sequence[VesselType | str],
    registry: PortRegistry,
) -> PortRegistry:
    """Give each port the vessel type with the most moorings there.

    Ties go to the lexicographically smallest type name; ports nobody moored
    at are ``unassigned``.
    """
    counts: dict[str, Counter] = {p.id: Counter() for p in registry.ports}
    for pts, vt in zip(matched, vessel_types):
        name = vt.value if isinstance(vt, VesselType) else str(vt)
        for lp in pts:
            counts[lp.port_id][name] += 1
    ports = []
    for p in registry.ports:
        c = counts[p.id]
        if not c:
            cat = UNASSIGNED
        else:
            top = max(c.values())
            cat = min(k for k, v in c.items() if v == top)
        ports.append(replace(p, category=cat))
    return replace(registry, ports=tuple(ports))


def build_label_sequences(
    sequences: Sequence[PositionSequence],
    segments: Sequence[Sequence[SubTrajectory]],
    registry: PortRegistry,
    predicate: BehaviorPredicate = is_stopped,
    categorize: bool = True,
) -> tuple[list[LabelSequence], PortRegistry]:
    """Label sequences (one per track with at least one label point) and the categorized registry.

    Tracks are processed independently and berth counts are order-free, so the
    output for a given track does not depend on the order of the input list.
    """
    matched = match_moorings(sequences, segments, registry, predicate)
    if categorize:
        registry = categorize_berths(matched, [s.vessel_type for s in sequences], registry)
    cats = registry.categories()
    out = []
    for seq, pts in zip(sequences, matched):
        if not pts:
            continue
        pts = sorted(pts, key=lambda lp: lp.timestamp)
        labeled = [replace(lp, port_label=cats[lp.port_id]) for lp in pts]
        out.append(LabelSequence(seq.mmsi, labeled, seq.vessel_type))
    return out, registry


# -- files ------------------------------------------------------------------

def read_ports(fh: IO[str], sigma: float = 2000.0) -> PortRegistry:
    """Ports CSV with columns ``port_id,lat,lon`` (optional ``category``)."""
    reader = csv.DictReader(fh)
    missing = {"port_id", "lat", "lon"} - set(reader.fieldnames or [])
    if missing:
        raise ValueError(f"ports file missing column(s): {', '.join(sorted(missing))}")
    ports = [
        Port(row["port_id"], float(row["lat"]), float(row["lon"]), row.get("category") or UNASSIGNED)
        for row in reader
    ]
    return PortRegistry(ports, sigma)


def write_ports(registry: PortRegistry, fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["port_id", "lat", "lon", "category"])
    for p in registry.ports:
        w.writerow([p.id, repr(float(p.lat)), repr(float(p.lon)), p.category])


def label_sequence_to_record(ls: LabelSequence) -> dict:
    return {
        "mmsi": ls.mmsi,
        "labels": [[lp.timestamp, lp.lat, lp.lon, lp.port_id, lp.port_label] for lp in ls.label_points],
        "vessel_type": ls.vessel_type.value,
        "segments": [lp.source_segment for lp in ls.label_points],
    }


def label_sequence_from_record(rec: dict) -> LabelSequence:
    segs = rec.get("segments") or [0] * len(rec["labels"])
    pts = [LabelPoint(int(s), float(a), float(o), int(t), str(pid), str(cat))
           for (t, a, o, pid, cat), s in zip(rec["labels"], segs)]
    return LabelSequence(str(rec["mmsi"]), pts, VesselType.parse(rec.get("vessel_type")))


def write_label_sequences(seqs: Iterable[LabelSequence], fh: IO[str]) -> int:
    n = 0
    for ls in seqs:
        fh.write(json.dumps(label_sequence_to_record(ls)) + "\n")
        n += 1
    return n


def read_label_sequences(fh: IO[str]) -> list[LabelSequence]:
    return [label_sequence_from_record(json.loads(line)) for line in fh if line.strip()]


DEFAULT_BEHAVIOR = STOPPED
