"""AIS CSV parsing and the cleaning pipeline (quality check, smoothing, slicing, filtering)."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import IO, Iterable

import numpy as np

from .core import PositionPoint, PositionSequence, VesselType, point_violations
from .geo import KNOT_MS, haversine

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ("mmsi", "timestamp", "lat", "lon", "sog", "cog", "vessel_type")


class SchemaError(ValueError):
    """The CSV header lacks a required column."""


@dataclass(frozen=True)
class ColumnMap:
    """Maps the seven logical fields to CSV header names."""

    mmsi: str = "mmsi"
    timestamp: str = "timestamp"
    lat: str = "lat"
    lon: str = "lon"
    sog: str = "sog"
    cog: str = "cog"
    vessel_type: str = "vessel_type"

    @classmethod
    def from_dict(cls, mapping: dict[str, str]) -> "ColumnMap":
        unknown = set(mapping) - set(REQUIRED_FIELDS)
        if unknown:
            raise ValueError(f"unknown column keys: {sorted(unknown)}")
        return cls(**mapping)


@dataclass
class ParseStats:
    rows: int = 0
    malformed: int = 0
    out_of_bounds: int = 0

    @property
    def dropped(self) -> int:
        return self.malformed + self.out_of_bounds


@dataclass
class IngestConfig:
    max_gap: int = 1800
    min_points: int = 3000
    smooth_window: int = 5
    speed_jump_limit: float = 1.0
    columns: ColumnMap = field(default_factory=ColumnMap)


def _parse_iso(text: str) -> int:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _parse_epoch(text: str) -> int:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("non-finite timestamp")
    return int(v)


def _looks_numeric(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def parse_ais_csv(
    stream: IO[bytes] | IO[str] | str | bytes,
    columns: ColumnMap | None = None,
) -> tuple[list[PositionPoint], ParseStats]:
    """Parse decoded AIS records into position points.

    The timestamp format (epoch seconds or ISO-8601) is detected once from
    the first data row and applied to the whole file. Malformed rows and rows
    violating coordinate/speed bounds are skipped and counted.

    Raises:
        SchemaError: when a mapped column is absent from the header.
    """
    columns = columns or ColumnMap()
    if isinstance(stream, bytes):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    elif isinstance(stream.read(0), bytes):
        stream = io.TextIOWrapper(stream, encoding="utf-8", newline="")

    reader = csv.reader(stream)
    stats = ParseStats()
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("empty input: no header row") from None
    idx = {}
    missing = []
    for name in REQUIRED_FIELDS:
        col = getattr(columns, name)
        if col not in header:
            missing.append(col)
        else:
            idx[name] = header.index(col)
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")

    parse_time = None
    points: list[PositionPoint] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        stats.rows += 1
        try:
            cells = {k: row[i].strip() for k, i in idx.items()}
            if parse_time is None:
                parse_time = _parse_epoch if _looks_numeric(cells["timestamp"]) else _parse_iso
            cog = float(cells["cog"])
            point = PositionPoint(
                mmsi=cells["mmsi"],
                timestamp=parse_time(cells["timestamp"]),
                lat=float(cells["lat"]),
                lon=float(cells["lon"]),
                sog=float(cells["sog"]),
                cog=cog % 360.0 if math.isfinite(cog) else cog,
                vessel_type=VesselType.parse(cells["vessel_type"]),
            )
            if not point.mmsi:
                raise ValueError("empty mmsi")
        except (ValueError, IndexError) as exc:
            stats.malformed += 1
            logger.debug("line %d skipped: %s", lineno, exc)
            continue
        if point_violations(point):
            stats.out_of_bounds += 1
            logger.debug("line %d out of bounds", lineno)
            continue
        points.append(point)
    if stats.dropped:
        logger.info("parsed %d rows, skipped %d malformed, %d out of bounds",
                    stats.rows, stats.malformed, stats.out_of_bounds)
    return points, stats


def group_by_vessel(points: Iterable[PositionPoint]) -> list[PositionSequence]:
    """Group by mmsi, sort by time, keep the first of duplicate timestamps."""
    groups: dict[str, list[PositionPoint]] = defaultdict(list)
    for p in points:
        groups[p.mmsi].append(p)
    out = []
    for mmsi in sorted(groups):
        # stable sort: the first-seen duplicate stays first
        pts = sorted(groups[mmsi], key=lambda p: p.timestamp)
        kept = [pts[0]]
        for p in pts[1:]:
            if p.timestamp != kept[-1].timestamp:
                kept.append(p)
        out.append(PositionSequence(mmsi, kept))
    return out


def _pair_accelerations(seq: PositionSequence) -> np.ndarray:
    """Implied acceleration (knots/s) between each consecutive pair.

    Takes the larger of the reported-speed change and the gap between the
    position-derived speed and the mean reported speed, so both SOG spikes and
    GPS position jumps register.
    """
    t = seq.timestamps.astype(np.float64)
    dt = np.maximum(np.diff(t), 1.0)
    sog = seq.sog
    dist = haversine(seq.lat[:-1], seq.lon[:-1], seq.lat[1:], seq.lon[1:])
    pos_speed = np.asarray(dist) / dt / KNOT_MS
    sog_jump = np.abs(np.diff(sog))
    pos_jump = np.abs(pos_speed - 0.5 * (sog[:-1] + sog[1:]))
    return np.maximum(sog_jump, pos_jump) / dt


def outlier_mask(seq: PositionSequence, speed_jump_limit: float) -> np.ndarray:
    n = len(seq)
    mask = np.zeros(n, dtype=bool)
    if n < 2:
        return mask
    bad = _pair_accelerations(seq) > speed_jump_limit
    if n == 2:
        return mask
    # interior points: implausible on both sides
    mask[1:-1] = bad[:-1] & bad[1:]
    # endpoints: implausible towards the neighbour while the neighbour is fine further in
    mask[0] = bad[0] and not bad[1]
    mask[-1] = bad[-1] and not bad[-2]
    return mask


def smooth(seq: PositionSequence, window: int = 5, speed_jump_limit: float = 1.0) -> PositionSequence:
    """Repair acceleration outliers with a windowed median.

    Flagged points get the median lat, lon and sog of the unflagged points in
    the centred window. Timestamps and course are left as they are; points
    that are not flagged are returned unchanged.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    mask = outlier_mask(seq, speed_jump_limit)
    if not mask.any():
        return seq
    half = window // 2
    lat, lon, sog = seq.lat, seq.lon, seq.sog
    pts = list(seq.points)
    n = len(pts)
    for i in np.flatnonzero(mask):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        good = [j for j in range(lo, hi) if not mask[j]]
        if not good:
            good = list(range(lo, hi))
        p = pts[i]
        pts[i] = PositionPoint(
            p.mmsi, p.timestamp,
            float(np.median(lat[good])), float(np.median(lon[good])), float(np.median(sog[good])),
            p.cog, p.vessel_type,
        )
    return PositionSequence(seq.mmsi, pts)


def slice_gaps(seq: PositionSequence, max_gap: int = 1800) -> list[PositionSequence]:
    """Split wherever consecutive timestamps differ by more than ``max_gap`` seconds."""
    if max_gap <= 0:
        raise ValueError("max_gap must be positive")
    if len(seq) == 0:
        return []
    cuts = np.flatnonzero(np.diff(seq.timestamps) > max_gap) + 1
    bounds = [0, *cuts.tolist(), len(seq)]
    return [PositionSequence(seq.mmsi, seq.points[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]


def filter_min_length(sequences: Iterable[PositionSequence], min_points: int) -> list[PositionSequence]:
    if min_points < 1:
        raise ValueError("min_points must be >= 1")
    return [s for s in sequences if len(s) >= min_points]


def run_pipeline(stream, config: IngestConfig | None = None) -> tuple[list[PositionSequence], ParseStats]:
    """parse -> group -> smooth -> slice -> filter, deterministic."""
    config = config or IngestConfig()
    points, stats = parse_ais_csv(stream, config.columns)
    out = []
    for seq in group_by_vessel(points):
        seq = smooth(seq, config.smooth_window, config.speed_jump_limit)
        out.extend(slice_gaps(seq, config.max_gap))
    return filter_min_length(out, config.min_points), stats


# -- JSONL ------------------------------------------------------------------

def sequence_to_record(seq: PositionSequence) -> dict:
    return {
        "mmsi": seq.mmsi,
        "points": [[p.timestamp, p.lat, p.lon, p.sog, p.cog] for p in seq.points],
        "vessel_type": seq.vessel_type.value,
    }


def sequence_from_record(rec: dict) -> PositionSequence:
    vt = VesselType.parse(rec.get("vessel_type"))
    mmsi = str(rec["mmsi"])
    pts = [PositionPoint(mmsi, int(t), float(a), float(o), float(s), float(c), vt)
           for t, a, o, s, c in rec["points"]]
    return PositionSequence(mmsi, pts)


def write_sequences(sequences: Iterable[PositionSequence], fh: IO[str]) -> int:
    n = 0
    for seq in sequences:
        fh.write(json.dumps(sequence_to_record(seq)) + "\n")
        n += 1
    return n


def read_sequences(fh: IO[str]) -> list[PositionSequence]:
    return [sequence_from_record(json.loads(line)) for line in fh if line.strip()]
