"""Domain types shared by every stage of the pipeline.

All types are frozen dataclasses. Position data is kept as plain Python
values on the points; :class:`PositionSequence` exposes cached numpy views
for the numeric stages.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


class VesselType(str, enum.Enum):
    CARGO = "cargo"
    CONTAINER = "container"
    TANKER = "tanker"
    PASSENGER = "passenger"
    FISHING = "fishing"
    TUG = "tug"
    BULK = "bulk"
    OTHER = "other"

    @classmethod
    def parse(cls, raw: str | int | None) -> "VesselType":
        """Map a free-text name or a numeric AIS ship-type code to a category.

        Anything unrecognised falls into ``OTHER``.
        """
        if raw is None:
            return cls.OTHER
        text = str(raw).strip().lower()
        try:
            return cls(text)
        except ValueError:
            pass
        try:
            code = int(float(text))
        except ValueError:
            return cls.OTHER
        if code == 30:
            return cls.FISHING
        if code in (31, 32, 52):
            return cls.TUG
        if 60 <= code <= 69:
            return cls.PASSENGER
        if 70 <= code <= 79:
            return cls.CARGO
        if 80 <= code <= 89:
            return cls.TANKER
        return cls.OTHER


class SpeedStatus(str, enum.Enum):
    ACCELERATING = "accelerating"
    DECELERATING = "decelerating"
    UNIFORM = "uniform"
    STOPPED = "stopped"


class TurnStatus(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    STRAIGHT = "straight"
    NONE = "none"


_MOVING_SPEEDS = (SpeedStatus.ACCELERATING, SpeedStatus.DECELERATING, SpeedStatus.UNIFORM)
_TURNS = (TurnStatus.LEFT, TurnStatus.RIGHT, TurnStatus.STRAIGHT)


@dataclass(frozen=True)
class BehaviorLabel:
    """One of the 10 legal (speed, turn) combinations.

    A stopped vessel carries no turn status; every moving status carries
    exactly one of left/right/straight.
    """

    speed_status: SpeedStatus
    turn_status: TurnStatus

    def __post_init__(self) -> None:
        speed = SpeedStatus(self.speed_status)
        turn = TurnStatus(self.turn_status)
        object.__setattr__(self, "speed_status", speed)
        object.__setattr__(self, "turn_status", turn)
        if (speed is SpeedStatus.STOPPED) != (turn is TurnStatus.NONE):
            raise ValueError(f"illegal behavior combination: {speed.value}/{turn.value}")

    @property
    def code(self) -> int:
        if self.speed_status is SpeedStatus.STOPPED:
            return 9
        return _MOVING_SPEEDS.index(self.speed_status) * 3 + _TURNS.index(self.turn_status)

    @classmethod
    def from_code(cls, code: int) -> "BehaviorLabel":
        if not 0 <= code < N_BEHAVIORS:
            raise ValueError(f"behavior code out of range: {code}")
        if code == 9:
            return cls(SpeedStatus.STOPPED, TurnStatus.NONE)
        return cls(_MOVING_SPEEDS[code // 3], _TURNS[code % 3])

    @property
    def name(self) -> str:
        if self.speed_status is SpeedStatus.STOPPED:
            return "stopped"
        return f"{self.speed_status.value}_{self.turn_status.value}"

    @classmethod
    def from_name(cls, name: str) -> "BehaviorLabel":
        if name == "stopped":
            return cls(SpeedStatus.STOPPED, TurnStatus.NONE)
        speed, _, turn = name.partition("_")
        return cls(SpeedStatus(speed), TurnStatus(turn))

    def __str__(self) -> str:
        return self.name


N_BEHAVIORS = 10
ALL_BEHAVIORS: tuple[BehaviorLabel, ...] = tuple(BehaviorLabel.from_code(c) for c in range(N_BEHAVIORS))
STOPPED = BehaviorLabel(SpeedStatus.STOPPED, TurnStatus.NONE)


@dataclass(frozen=True)
class PositionPoint:
    mmsi: str
    timestamp: int
    lat: float
    lon: float
    sog: float
    cog: float
    vessel_type: VesselType = VesselType.OTHER


@dataclass(frozen=True)
class PositionSequence:
    mmsi: str
    points: tuple[PositionPoint, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(self.points))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def vessel_type(self) -> VesselType:
        return self.points[0].vessel_type if self.points else VesselType.OTHER

    @cached_property
    def timestamps(self) -> np.ndarray:
        return np.array([p.timestamp for p in self.points], dtype=np.int64)

    @cached_property
    def lat(self) -> np.ndarray:
        return np.array([p.lat for p in self.points], dtype=np.float64)

    @cached_property
    def lon(self) -> np.ndarray:
        return np.array([p.lon for p in self.points], dtype=np.float64)

    @cached_property
    def sog(self) -> np.ndarray:
        return np.array([p.sog for p in self.points], dtype=np.float64)

    @cached_property
    def cog(self) -> np.ndarray:
        return np.array([p.cog for p in self.points], dtype=np.float64)

    def slice(self, start: int, end: int) -> "PositionSequence":
        """Points ``start..end`` inclusive."""
        return PositionSequence(self.mmsi, self.points[start : end + 1])

    @classmethod
    def from_arrays(
        cls,
        mmsi: str,
        timestamps: Sequence[int],
        lat: Sequence[float],
        lon: Sequence[float],
        sog: Sequence[float],
        cog: Sequence[float],
        vessel_type: VesselType = VesselType.OTHER,
    ) -> "PositionSequence":
        pts = tuple(
            PositionPoint(mmsi, int(t), float(a), float(o), float(s), float(c), vessel_type)
            for t, a, o, s, c in zip(timestamps, lat, lon, sog, cog)
        )
        return cls(mmsi, pts)


@dataclass(frozen=True)
class SubTrajectory:
    parent_mmsi: str
    start_index: int
    end_index: int
    points: tuple[PositionPoint, ...]
    behavior: BehaviorLabel | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(self.points))
        if self.start_index > self.end_index:
            raise ValueError("start_index must not exceed end_index")
        if len(self.points) != self.end_index - self.start_index + 1:
            raise ValueError("points do not match the index range")

    def __len__(self) -> int:
        return len(self.points)

    def as_sequence(self) -> PositionSequence:
        return PositionSequence(self.parent_mmsi, self.points)

    def with_behavior(self, behavior: BehaviorLabel) -> "SubTrajectory":
        return SubTrajectory(self.parent_mmsi, self.start_index, self.end_index, self.points, behavior)


@dataclass(frozen=True)
class Port:
    id: str
    lat: float
    lon: float
    category: str = "unassigned"


@dataclass(frozen=True)
class LabelPoint:
    source_segment: int
    lat: float
    lon: float
    timestamp: int
    port_id: str
    port_label: str = "unassigned"


@dataclass(frozen=True)
class LabelSequence:
    mmsi: str
    label_points: tuple[LabelPoint, ...]
    vessel_type: VesselType = VesselType.OTHER

    def __post_init__(self) -> None:
        object.__setattr__(self, "label_points", tuple(self.label_points))

    def __len__(self) -> int:
        return len(self.label_points)


@dataclass(frozen=True)
class Violation:
    index: int | None
    kind: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def __bool__(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def kinds(self) -> list[str]:
        return [v.kind for v in self.violations]


def point_violations(p: PositionPoint, index: int | None = None) -> list[Violation]:
    out = []
    if not (math.isfinite(p.lat) and -90.0 <= p.lat <= 90.0):
        out.append(Violation(index, "bounds", f"lat {p.lat} outside [-90, 90]"))
    if not (math.isfinite(p.lon) and -180.0 <= p.lon <= 180.0):
        out.append(Violation(index, "bounds", f"lon {p.lon} outside [-180, 180]"))
    if not (math.isfinite(p.sog) and p.sog >= 0.0):
        out.append(Violation(index, "bounds", f"sog {p.sog} must be finite and >= 0"))
    if not (math.isfinite(p.cog) and 0.0 <= p.cog < 360.0):
        out.append(Violation(index, "bounds", f"cog {p.cog} outside [0, 360)"))
    return out


def validate(sequence: PositionSequence) -> ValidationReport:
    """Check every invariant of ``sequence``; never raises."""
    report = ValidationReport()
    prev_t = None
    for i, p in enumerate(sequence.points):
        report.violations.extend(point_violations(p, i))
        if p.mmsi != sequence.mmsi:
            report.violations.append(Violation(i, "mmsi", f"point mmsi {p.mmsi!r} != {sequence.mmsi!r}"))
        if prev_t is not None and p.timestamp <= prev_t:
            report.violations.append(
                Violation(i, "monotonicity", f"timestamp {p.timestamp} does not follow {prev_t}")
            )
        prev_t = p.timestamp
    return report


def concat_points(segments: Iterable[SubTrajectory]) -> tuple[PositionPoint, ...]:
    out: list[PositionPoint] = []
    for s in segments:
        out.extend(s.points)
    return tuple(out)


def wrap_degrees(delta):
    """Wrap an angle difference into (-180, 180]."""
    w = np.mod(np.asarray(delta, dtype=np.float64) + 180.0, 360.0) - 180.0
    w = np.where(w == -180.0, 180.0, w)
    return float(w) if np.ndim(w) == 0 else w
