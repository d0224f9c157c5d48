"""Deterministic synthetic tracks with planted ground truth.

Two generators:

* :func:`gen_regime_track` strings kinematic regimes together (one planted
  behavior each) and reports the true boundaries;
* :func:`gen_fleet` simulates ferry / liner / tramp vessels moving between
  ports with planted moorings and port schedules.

Positions are dead-reckoned on a local tangent plane at a fixed cadence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .core import (
    BehaviorLabel,
    Port,
    PositionSequence,
    SpeedStatus,
    TurnStatus,
    VesselType,
)
from .geo import KNOT_MS, bearing, haversine, offset, step_position
from .labels import PortRegistry

DT = 10
T0 = 1_425_168_000  # 2015-03-01T00:00:00Z
MIN_STAY = 20       # reports; shorter final stays are trimmed from fleet tracks


@dataclass(frozen=True)
class Regime:
    behavior: BehaviorLabel | str
    duration: int
    base_sog: float | None = None
    base_cog: float | None = None

    @property
    def label(self) -> BehaviorLabel:
        b = self.behavior
        return b if isinstance(b, BehaviorLabel) else BehaviorLabel.from_name(b)


@dataclass
class RegimeTrack:
    sequence: PositionSequence
    boundaries: list[int]
    labels: np.ndarray          # planted behavior code per point
    regimes: list[BehaviorLabel]


def _default_sog(b: BehaviorLabel) -> float:
    s = b.speed_status
    if s is SpeedStatus.STOPPED:
        return 0.5
    if s is SpeedStatus.DECELERATING:
        return 24.0
    return 15.0


def gen_regime_track(
    regimes: Sequence[Regime | tuple],
    noise: float = 0.3,
    seed: int = 0,
    mmsi: str = "100000001",
    start: tuple[float, float] = (30.0, 122.0),
    turn_rate: float = 1.0,
    speed_ramp: float = 8.0,
    cog_noise: float = 0.5,
    t0: int = T0,
    vessel_type: VesselType = VesselType.OTHER,
) -> RegimeTrack:
    """Concatenate planted regimes into one track.

    Accelerating/decelerating regimes ramp the speed by ``speed_ramp`` knots
    over their duration; left/right regimes turn ``turn_rate`` degrees per
    step; stopped regimes drift slowly, the course jittering about the last heading. ``noise`` is
    the Gaussian SOG noise (knots) added to reported speeds.
    """
    rng = np.random.default_rng(seed)
    regs = [r if isinstance(r, Regime) else Regime(*r) for r in regimes]
    lat, lon = start
    cog = 90.0
    sogs, cogs, codes, boundaries = [], [], [], []
    for r in regs:
        b = r.label
        if sogs:
            boundaries.append(len(sogs))
        base = r.base_sog if r.base_sog is not None else _default_sog(b)
        if r.base_cog is not None:
            cog = r.base_cog
        k = np.arange(r.duration)
        frac = k / max(r.duration - 1, 1)
        if b.speed_status is SpeedStatus.ACCELERATING:
            sog = base + speed_ramp * frac
        elif b.speed_status is SpeedStatus.DECELERATING:
            sog = base - speed_ramp * frac
        else:
            sog = np.full(r.duration, base)
        if b.turn_status is TurnStatus.RIGHT:
            c = cog + turn_rate * (k + 1)
        elif b.turn_status is TurnStatus.LEFT:
            c = cog - turn_rate * (k + 1)
        elif b.turn_status is TurnStatus.NONE:
            c = cog + rng.normal(0.0, 3.0, r.duration)
        else:
            c = np.full(r.duration, cog)
        cog = float(c[-1])
        sogs.extend(sog.tolist())
        cogs.extend(c.tolist())
        codes.extend([b.code] * r.duration)
    sogs = np.asarray(sogs)
    cogs = np.asarray(cogs)
    n = len(sogs)
    rep_sog = np.maximum(sogs + rng.normal(0.0, noise, n), 0.0) if noise > 0 else sogs.copy()
    rep_cog = np.mod(cogs + rng.normal(0.0, cog_noise, n), 360.0)
    lats, lons = np.empty(n), np.empty(n)
    for i in range(n):
        if i > 0:
            lat, lon = step_position(lat, lon, sogs[i], cogs[i], DT)
        lats[i], lons[i] = lat, lon
    t = t0 + DT * np.arange(n)
    seq = PositionSequence.from_arrays(mmsi, t, lats, lons, rep_sog, rep_cog, vessel_type)
    return RegimeTrack(seq, boundaries, np.asarray(codes, dtype=np.int64), [r.label for r in regs])


def behavior_archetypes(duration: int = 100) -> list[Regime]:
    """One single-regime archetype per legal behavior (10 in total)."""
    out = []
    for code in range(10):
        b = BehaviorLabel.from_code(code)
        out.append(Regime(b, duration))
    return out


def planted_regime_track(seed: int = 0, duration: tuple[int, int] = (100, 160), noise: float = 0.3,
                         mmsi: str = "100000001") -> RegimeTrack:
    """Uniform cruise, a turn and a stop in random order.

    Speeds, turn direction and regime lengths are drawn from ``seed``; every
    planted boundary is a change in speed level or in turning.
    """
    rng = np.random.default_rng(seed)
    turn = "uniform_left" if rng.random() < 0.5 else "uniform_right"
    kinds = [("uniform_straight", float(rng.uniform(10.0, 20.0))),
             (turn, float(rng.uniform(10.0, 20.0))),
             ("stopped", float(rng.uniform(0.0, 2.0)))]
    order = rng.permutation(3)
    regs = [Regime(kinds[i][0], int(rng.integers(duration[0], duration[1] + 1)), kinds[i][1]) for i in order]
    return gen_regime_track(regs, noise=noise, seed=int(rng.integers(2**31)), mmsi=mmsi)


# -- fleet ----------------------------------------------------------------

ARCHETYPES = ("ferry", "liner", "tramp")
ARCHETYPE_TYPE = {"ferry": VesselType.PASSENGER, "liner": VesselType.CONTAINER, "tramp": VesselType.TANKER}


@dataclass(frozen=True)
class ArchetypeParams:
    cruise: float
    dwell: tuple[int, int]
    curve: float          # heading offset amplitude along a leg (deg)
    ports: tuple[str, ...]
    schedule: str         # "shuttle" | "rotation" | "random"


DEFAULT_PARAMS = {
    "ferry": ArchetypeParams(18.0, (40, 50), 0.0, ("F1", "F2"), "shuttle"),
    "liner": ArchetypeParams(14.0, (50, 70), 50.0, ("L1", "L2", "L3"), "rotation"),
    "tramp": ArchetypeParams(12.0, (150, 250), 0.0, ("T1", "T2", "T3"), "random"),
}


def default_ports(origin: tuple[float, float] = (30.0, 122.0)) -> PortRegistry:
    """Eight ports in three well separated groups (ferry, liner, tramp)."""
    lat0, lon0 = origin
    layout = {
        "F1": (0.0, 0.0), "F2": (0.0, 14000.0),
        "L1": (-8000.0, 24000.0), "L2": (4000.0, 31000.0), "L3": (-8000.0, 38000.0),
        "T1": (15000.0, 0.0), "T2": (21000.0, 3000.0), "T3": (16000.0, 8000.0),
    }
    ports = []
    for pid, (north, east) in layout.items():
        la, lo = offset(lat0, lon0, north, east)
        ports.append(Port(pid, la, lo))
    return PortRegistry(ports, 2000.0)


@dataclass
class _Sim:
    rng: np.random.Generator
    lat: float
    lon: float
    sog: float = 0.0
    cog: float = 0.0
    rows: list = field(default_factory=list)
    sog_noise: float = 0.3

    def emit(self) -> None:
        self.rows.append((self.lat, self.lon, self.sog, self.cog))

    def advance(self, sog: float, cog: float) -> None:
        self.sog, self.cog = max(sog, 0.0), cog % 360.0
        self.lat, self.lon = step_position(self.lat, self.lon, self.sog, self.cog, DT)
        self.emit()

    def dwell(self, n: int, budget: int) -> None:
        for _ in range(min(n, budget - len(self.rows))):
            self.advance(abs(self.rng.normal(0.3, 0.2)), self.cog + self.rng.normal(0.0, 5.0))

    def sail(self, port: Port, cruise: float, curve: float, budget: int,
             accel: float = 2.0, decel: float = 2.0) -> None:
        leg = haversine(self.lat, self.lon, port.lat, port.lon)
        sog = self.sog
        if sog < 1.0:
            # course over ground is meaningless at berth: leave on the planned heading
            self.cog = (bearing(self.lat, self.lon, port.lat, port.lon) + curve) % 360.0
        braking = False
        while len(self.rows) < budget:
            remaining = haversine(self.lat, self.lon, port.lat, port.lon)
            brake = 0.5 * sog * KNOT_MS * DT * (sog / decel)
            braking = braking or remaining <= max(brake, 30.0)
            if braking:
                sog -= decel
                if sog <= 0.5:
                    return
            else:
                sog = min(cruise, sog + accel)
            progress = 1.0 - min(remaining / max(leg, 1.0), 1.0)
            target = bearing(self.lat, self.lon, port.lat, port.lon) + curve * (1.0 - progress)
            turn = ((target - self.cog + 180.0) % 360.0) - 180.0
            # harbour manoeuvring: tighter turns on the final approach so the
            # vessel cannot orbit a berth it is too fast to reach
            limit = 3.0 if remaining > 4.0 * max(brake, 30.0) else 15.0
            self.advance(sog, self.cog + float(np.clip(turn, -limit, limit)))


@dataclass
class Fleet:
    tracks: list[PositionSequence]
    archetypes: list[str]
    vessel_types: list[VesselType]
    schedules: list[list[str]]      # planted port visit order (moorings) per vessel
    dwell_lengths: list[list[int]]
    registry: PortRegistry

    @property
    def planted_categories(self) -> dict[str, str]:
        out = {}
        for arch, p in DEFAULT_PARAMS.items():
            for pid in p.ports:
                out[pid] = ARCHETYPE_TYPE[arch].value
        return out


def _next_port(params: ArchetypeParams, current: int, rng: np.random.Generator) -> int:
    n = len(params.ports)
    if params.schedule in ("shuttle", "rotation"):
        return (current + 1) % n
    choices = [i for i in range(n) if i != current]
    return int(rng.choice(choices))


def simulate_vessel(archetype: str, n_points: int, registry: PortRegistry, rng: np.random.Generator,
                    mmsi: str, params: ArchetypeParams | None = None, start_port: int | None = None,
                    t0: int = T0, sog_noise: float = 0.3) -> tuple[PositionSequence, list[str], list[int]]:
    params = params or DEFAULT_PARAMS[archetype]
    ports = [registry.get(pid) for pid in params.ports]
    cur = int(rng.integers(len(ports))) if start_port is None else start_port
    p0 = ports[cur]
    sim = _Sim(rng, p0.lat, p0.lon, 0.0, float(rng.uniform(0, 360)))
    sim.emit()
    schedule, dwells = [], []
    while len(sim.rows) < n_points:
        n = int(rng.integers(params.dwell[0], params.dwell[1] + 1))
        before = len(sim.rows)
        sim.dwell(n, n_points)
        schedule.append(ports[cur].id)
        dwells.append(len(sim.rows) - before)
        cur = _next_port(params, cur, rng)
        sim.sail(ports[cur], params.cruise, params.curve, n_points)
    if len(dwells) > 1 and dwells[-1] < MIN_STAY:
        # the track ended moments after arrival: that is not a mooring
        del sim.rows[len(sim.rows) - dwells[-1]:]
        schedule.pop()
        dwells.pop()
    return _to_sequence(sim, mmsi, ARCHETYPE_TYPE[archetype], t0, sog_noise), schedule, dwells


def _to_sequence(sim: _Sim, mmsi: str, vt: VesselType, t0: int, sog_noise: float) -> PositionSequence:
    rows = np.asarray(sim.rows)
    n = len(rows)
    sog = np.maximum(rows[:, 2] + sim.rng.normal(0.0, sog_noise, n), 0.0)
    cog = np.mod(rows[:, 3] + sim.rng.normal(0.0, 0.5, n), 360.0)
    t = t0 + DT * np.arange(n)
    return PositionSequence.from_arrays(mmsi, t, rows[:, 0], rows[:, 1], sog, cog, vt)


def gen_fleet(
    counts: dict[str, int] | None = None,
    registry: PortRegistry | None = None,
    seed: int = 0,
    n_points: tuple[int, int] = (200, 400),
    sog_noise: float = 0.3,
) -> Fleet:
    """Simulate a fleet; vessels are emitted grouped by archetype in ``ARCHETYPES`` order."""
    counts = counts if counts is not None else {"ferry": 10, "liner": 10, "tramp": 10}
    registry = registry or default_ports()
    for arch, c in counts.items():
        if arch not in DEFAULT_PARAMS:
            raise ValueError(f"unknown archetype {arch!r}")
        if c and len(DEFAULT_PARAMS[arch].ports) < 2:
            raise ValueError(f"archetype {arch} needs at least 2 ports")
    rng = np.random.default_rng(seed)
    tracks, archs, types, schedules, dwells = [], [], [], [], []
    serial = 0
    for arch in ARCHETYPES:
        for _ in range(counts.get(arch, 0)):
            serial += 1
            # a clipped final stay is trimmed, so leave room for it
            n = int(rng.integers(min(n_points[0] + MIN_STAY - 1, n_points[1]), n_points[1] + 1))
            vrng = np.random.default_rng(rng.integers(2**63))
            t0 = T0 + int(rng.integers(0, 86400))
            seq, sched, dw = simulate_vessel(arch, n, registry, vrng, f"4{serial:08d}", t0=t0,
                                             sog_noise=sog_noise)
            tracks.append(seq)
            archs.append(arch)
            types.append(ARCHETYPE_TYPE[arch])
            schedules.append(sched)
            dwells.append(dw)
    return Fleet(tracks, archs, types, schedules, dwells, registry)


def gen_switching_vessel(n_points: int = 600, seed: int = 0, registry: PortRegistry | None = None,
                         mmsi: str = "499999999") -> tuple[PositionSequence, int]:
    """Ferry shuttling for the first half, then tramp-style long dwells.

    Returns the track and the index where the behavior switches.
    """
    registry = registry or default_ports()
    rng = np.random.default_rng(seed)
    half = n_points // 2
    ferry = DEFAULT_PARAMS["ferry"]
    ports = [registry.get(pid) for pid in ferry.ports]
    cur = 0
    sim = _Sim(rng, ports[0].lat, ports[0].lon, 0.0, 90.0)
    sim.emit()
    while len(sim.rows) < half:
        sim.dwell(int(rng.integers(ferry.dwell[0], ferry.dwell[1] + 1)), half)
        cur = (cur + 1) % 2
        sim.sail(ports[cur], ferry.cruise, ferry.curve, half)
    switch = len(sim.rows)
    # finish the current leg, then behave like a tramp: long stays, slow passages
    tramp = DEFAULT_PARAMS["tramp"]
    sim.sail(ports[cur], tramp.cruise, 0.0, n_points)
    while len(sim.rows) < n_points:
        sim.dwell(int(rng.integers(tramp.dwell[0], tramp.dwell[1] + 1)), n_points)
        cur = (cur + 1) % 2
        sim.sail(ports[cur], tramp.cruise, 0.0, n_points)
    return _to_sequence(sim, mmsi, VesselType.OTHER, T0, 0.3), switch


def write_ais_csv(tracks: Iterable[PositionSequence], fh: IO[str]) -> int:
    """Write tracks in the ingestion CSV schema, rows ordered by track then time."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["mmsi", "timestamp", "lat", "lon", "sog", "cog", "vessel_type"])
    n = 0
    for seq in tracks:
        for p in seq.points:
            w.writerow([p.mmsi, p.timestamp, repr(p.lat), repr(p.lon), repr(p.sog), repr(p.cog),
                        p.vessel_type.value])
            n += 1
    return n
