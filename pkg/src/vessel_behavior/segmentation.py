"""Change-point segmentation of position sequences and 10-class behavior labeling."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from typing import IO, Iterable, Protocol, Sequence

import numpy as np

from .core import (
    BehaviorLabel,
    PositionSequence,
    SpeedStatus,
    SubTrajectory,
    TurnStatus,
    wrap_degrees,
)


class DegenerateSegmentError(ValueError):
    """Fewer than two points where a kinematic summary needs at least two."""


@dataclass(frozen=True)
class SegmenterConfig:
    u: int = 20
    lam: int = 2
    delta: float = 1.0
    speed_sign_fraction: float = 0.8
    stop_speed: float = 10.0
    speed_var_threshold: float = 1.0
    turn_threshold: float = 15.0
    # "recursive": cut at the best candidate above delta, then rescore each
    # side with windows clipped at the cut. "threshold": keep every candidate
    # above delta (after peak selection with ``peak_radius``).
    search: str = "recursive"
    # threshold search only: candidates within this many candidate steps
    # compete and only the local maximum survives; 0 keeps all.
    peak_radius: int = 0
    # Lower bounds on per-feature spread used in z-normalisation
    # (mean sog kn, std sog kn, net course deg, mean |course step| deg).
    scale_floor: tuple[float, float, float, float] = (1.0, 0.5, 10.0, 2.0)

    def __post_init__(self) -> None:
        if self.u < 2:
            raise ValueError("u must be >= 2")
        if self.lam < 1:
            raise ValueError("lam must be >= 1")
        if not (self.delta >= 0):
            raise ValueError("delta must be non-negative")
        if not 0.5 < self.speed_sign_fraction <= 1.0:
            raise ValueError("speed_sign_fraction must lie in (0.5, 1]")
        if self.stop_speed <= 0 or self.speed_var_threshold <= 0 or self.turn_threshold <= 0:
            raise ValueError("thresholds must be positive")
        if self.peak_radius < 0:
            raise ValueError("peak_radius must be >= 0")
        if self.search not in ("recursive", "threshold"):
            raise ValueError("search must be 'recursive' or 'threshold'")
        object.__setattr__(self, "scale_floor", tuple(float(x) for x in self.scale_floor))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scale_floor"] = list(self.scale_floor)
        return d


def pre_change_points(T: Sequence | int, u: int) -> list[int]:
    """Candidate indices u, 2u, ..., u*(n//u - 1)."""
    n = T if isinstance(T, int) else len(T)
    if n < 2 * u:
        return []
    return [u * k for k in range(1, n // u)]


def window_features(sog: np.ndarray, cog: np.ndarray) -> np.ndarray:
    """(mean sog, population std sog, net course change, mean |course step|)."""
    sog = np.asarray(sog, dtype=np.float64)
    cog = np.asarray(cog, dtype=np.float64)
    if len(sog) < 2:
        raise DegenerateSegmentError("window needs at least 2 points")
    steps = wrap_degrees(np.diff(cog))
    net = wrap_degrees(cog[-1] - cog[0])
    return np.array([sog.mean(), sog.std(), net, np.abs(steps).mean()])


def _windows(n: int, p: int, lam: int, u: int, lo: int = 0) -> tuple[slice, slice]:
    w = lam * u
    return slice(max(lo, p - w), p + 1), slice(p, min(n, p + w + 1))


def _clipped_features(sog: np.ndarray, cog: np.ndarray, sl: slice, lam: int, u: int) -> np.ndarray:
    """Window features with the net course change scaled to a full window.

    A steady turn seen through a clipped window would otherwise look like a
    change of behaviour. Full windows are left untouched.
    """
    f = window_features(sog[sl], cog[sl])
    steps = sl.stop - sl.start - 1
    if steps < lam * u:
        f[2] *= lam * u / steps
    return f


def candidate_features(T: PositionSequence, lam: int, u: int) -> tuple[list[int], np.ndarray, np.ndarray]:
    """Left/right window features for every candidate of ``T``.

    Windows are clipped at the ends of the trajectory; every candidate keeps at
    least ``u`` points on each side.
    """
    cands = pre_change_points(T, u)
    sog, cog = T.sog, T.cog
    left, right = [], []
    for p in cands:
        ls, rs = _windows(len(T), p, lam, u)
        left.append(_clipped_features(sog, cog, ls, lam, u))
        right.append(_clipped_features(sog, cog, rs, lam, u))
    shape = (len(cands), 4)
    return cands, np.array(left).reshape(shape), np.array(right).reshape(shape)


def normalization(left: np.ndarray, right: np.ndarray, floor: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    allw = np.vstack([left, right])
    if len(allw) == 0:
        return np.zeros(4), np.ones(4)
    return allw.mean(axis=0), np.maximum(allw.std(axis=0), np.asarray(floor))


def change_point_scores(T: PositionSequence, config: SegmenterConfig) -> tuple[list[int], np.ndarray]:
    """Score every candidate: distance between z-normalised window features."""
    cands, left, right = candidate_features(T, config.lam, config.u)
    _, scale = normalization(left, right, config.scale_floor)
    # the mean cancels in the difference
    scores = np.sqrt((((left - right) / scale) ** 2).sum(axis=1)) if cands else np.zeros(0)
    return cands, scores


def change_point_score(T: PositionSequence, p: int, lam: int, u: int,
                       config: SegmenterConfig | None = None) -> float:
    """Score of the single candidate ``p``, normalised against all candidates of ``T``."""
    config = config or SegmenterConfig(u=u, lam=lam)
    cands, left, right = candidate_features(T, lam, u)
    _, scale = normalization(left, right, config.scale_floor)
    ls, rs = _windows(len(T), p, lam, u)
    fl = _clipped_features(T.sog, T.cog, ls, lam, u)
    fr = _clipped_features(T.sog, T.cog, rs, lam, u)
    return float(np.sqrt((((fl - fr) / scale) ** 2).sum()))


def select_peaks(scores: np.ndarray, radius: int) -> np.ndarray:
    """Boolean mask of candidates that are the maximum within ``radius`` neighbours.

    Ties go to the earliest candidate.
    """
    n = len(scores)
    keep = np.ones(n, dtype=bool)
    if radius == 0:
        return keep
    for i in range(n):
        lo, hi = max(0, i - radius), min(n, i + radius + 1)
        before = scores[lo:i]
        after = scores[i + 1:hi]
        if (before >= scores[i]).any() or (after > scores[i]).any():
            keep[i] = False
    return keep


class Segmenter(Protocol):
    def cut_points(self, T: PositionSequence) -> list[int]:
        """Indices at which a new segment starts (excluding 0)."""
        ...


def _score_between(sog: np.ndarray, cog: np.ndarray, p: int, lo: int, hi: int, lam: int, u: int,
                   scale: np.ndarray) -> float:
    ls, rs = _windows(hi, p, lam, u, lo)
    d = (_clipped_features(sog, cog, ls, lam, u) - _clipped_features(sog, cog, rs, lam, u)) / scale
    return float(np.sqrt((d ** 2).sum()))


def recursive_cuts(T: PositionSequence, config: SegmenterConfig) -> list[int]:
    """Binary splitting: cut at the top-scoring candidate while its score exceeds delta.

    After a cut each side is searched again with windows clipped at the cut,
    so a change next to a stronger one is scored against clean windows. The
    normalisation scale stays the whole-trajectory one.
    """
    cands, left, right = candidate_features(T, config.lam, config.u)
    if not cands:
        return []
    _, scale = normalization(left, right, config.scale_floor)
    sog, cog = T.sog, T.cog
    cuts = []
    stack = [(0, len(T))]
    while stack:
        lo, hi = stack.pop()
        inner = [c for c in cands if lo < c < hi - 1]
        if not inner:
            continue
        scores = [_score_between(sog, cog, c, lo, hi, config.lam, config.u, scale) for c in inner]
        best = int(np.argmax(scores))
        if scores[best] > config.delta:
            c = inner[best]
            cuts.append(c)
            stack.extend([(c, hi), (lo, c)])
    return sorted(cuts)


class ChangePointSegmenter:
    """Window-distance change points, found recursively or by plain thresholding."""

    def __init__(self, config: SegmenterConfig | None = None):
        self.config = config or SegmenterConfig()

    def cut_points(self, T: PositionSequence) -> list[int]:
        if self.config.search == "recursive":
            return recursive_cuts(T, self.config)
        cands, scores = change_point_scores(T, self.config)
        if not cands:
            return []
        keep = select_peaks(scores, self.config.peak_radius) & (scores > self.config.delta)
        return [c for c, k in zip(cands, keep) if k]


def split_at(T: PositionSequence, cuts: Iterable[int]) -> list[SubTrajectory]:
    bounds = [0, *sorted(set(c for c in cuts if 0 < c < len(T))), len(T)]
    return [
        SubTrajectory(T.mmsi, a, b - 1, T.points[a:b])
        for a, b in zip(bounds[:-1], bounds[1:])
    ]


def segment(T: PositionSequence, config: SegmenterConfig | None = None,
            segmenter: Segmenter | None = None) -> list[SubTrajectory]:
    """Cut ``T`` into exclusive, exhaustive, unlabeled sub-trajectories."""
    if len(T) == 0:
        return []
    segmenter = segmenter or ChangePointSegmenter(config)
    return split_at(T, segmenter.cut_points(T))


def _speed_cog(segment) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(segment, (SubTrajectory, PositionSequence)):
        pts = segment.points
        sog = np.array([p.sog for p in pts], dtype=np.float64)
        cog = np.array([p.cog for p in pts], dtype=np.float64)
    else:
        sog, cog = (np.asarray(a, dtype=np.float64) for a in segment)
    if len(sog) < 2:
        raise DegenerateSegmentError("segment needs at least 2 points")
    return sog, cog


def classify_speed(segment, config: SegmenterConfig | None = None) -> SpeedStatus:
    """Speed ladder: stop test, dominant-sign test, variance test, end-minus-start."""
    config = config or SegmenterConfig()
    sog, _ = _speed_cog(segment)
    if sog.mean() < config.stop_speed:
        return SpeedStatus.STOPPED
    diffs = np.diff(sog)
    m = len(diffs)
    if np.count_nonzero(diffs > 0) >= config.speed_sign_fraction * m:
        return SpeedStatus.ACCELERATING
    if np.count_nonzero(diffs < 0) >= config.speed_sign_fraction * m:
        return SpeedStatus.DECELERATING
    if sog.var() < config.speed_var_threshold:
        return SpeedStatus.UNIFORM
    change = sog[-1] - sog[0]
    if change > 0:
        return SpeedStatus.ACCELERATING
    if change < 0:
        return SpeedStatus.DECELERATING
    return SpeedStatus.UNIFORM


def classify_turn(segment, config: SegmenterConfig | None = None) -> TurnStatus:
    """Signed net course change against the turn threshold; |change| == threshold is straight."""
    config = config or SegmenterConfig()
    sog, cog = _speed_cog(segment)
    if classify_speed((sog, cog), config) is SpeedStatus.STOPPED:
        raise ValueError("turn status is undefined for a stopped segment")
    net = wrap_degrees(cog[-1] - cog[0])
    if net > config.turn_threshold:
        return TurnStatus.RIGHT
    if net < -config.turn_threshold:
        return TurnStatus.LEFT
    return TurnStatus.STRAIGHT


def classify(segment, config: SegmenterConfig | None = None) -> BehaviorLabel:
    speed = classify_speed(segment, config)
    if speed is SpeedStatus.STOPPED:
        return BehaviorLabel(speed, TurnStatus.NONE)
    return BehaviorLabel(speed, classify_turn(segment, config))


def label(segments: Iterable[SubTrajectory], config: SegmenterConfig | None = None) -> list[SubTrajectory]:
    return [s.with_behavior(classify(s, config)) for s in segments]


def merge_runs(segments: Sequence[SubTrajectory]) -> list[SubTrajectory]:
    """Fuse consecutive segments that carry the same behavior."""
    out: list[SubTrajectory] = []
    for s in segments:
        if out and out[-1].behavior == s.behavior and out[-1].end_index + 1 == s.start_index:
            prev = out[-1]
            out[-1] = SubTrajectory(prev.parent_mmsi, prev.start_index, s.end_index,
                                    prev.points + s.points, prev.behavior)
        else:
            out.append(s)
    return out


def represent(T: PositionSequence, config: SegmenterConfig | None = None,
              merge: bool = True, segmenter: Segmenter | None = None) -> list[SubTrajectory]:
    """Segment and label ``T``; optionally fuse repeated adjacent behaviors."""
    config = config or SegmenterConfig()
    segs = label(segment(T, config, segmenter), config)
    return merge_runs(segs) if merge else segs


def point_labels(T: PositionSequence, segments: Sequence[SubTrajectory]) -> np.ndarray:
    """Behavior code of the enclosing segment for every point of ``T``."""
    codes = np.full(len(T), -1, dtype=np.int64)
    for s in segments:
        codes[s.start_index:s.end_index + 1] = s.behavior.code
    if (codes < 0).any():
        raise ValueError("segments do not cover the sequence")
    return codes


# -- JSONL ------------------------------------------------------------------

def segment_to_record(s: SubTrajectory, track: int | None = None) -> dict:
    rec = {"mmsi": s.parent_mmsi, "start": s.start_index, "end": s.end_index,
           "behavior": s.behavior.name if s.behavior else None}
    if s.behavior is not None:
        rec["speed_status"] = s.behavior.speed_status.value
        rec["turn_status"] = s.behavior.turn_status.value
    if track is not None:
        rec["track"] = track
    return rec


def write_segments(per_track: Iterable[list[SubTrajectory]], fh: IO[str]) -> int:
    n = 0
    for track, segs in enumerate(per_track):
        for s in segs:
            fh.write(json.dumps(segment_to_record(s, track)) + "\n")
            n += 1
    return n


def read_segments(fh: IO[str], sequences: Sequence[PositionSequence]) -> list[list[SubTrajectory]]:
    """Rebuild labeled segments against the sequences they were cut from.

    Records carry a ``track`` index (line number in the sequence file); records
    without one are matched by mmsi.
    """
    by_mmsi = {}
    for i, s in enumerate(sequences):
        by_mmsi.setdefault(s.mmsi, i)
    out: list[list[SubTrajectory]] = [[] for _ in sequences]
    for line in fh:
        if not line.strip():
            continue
        rec = json.loads(line)
        track = rec.get("track")
        if track is None:
            track = by_mmsi[str(rec["mmsi"])]
        seq = sequences[track]
        a, b = int(rec["start"]), int(rec["end"])
        beh = BehaviorLabel.from_name(rec["behavior"]) if rec.get("behavior") else None
        out[track].append(SubTrajectory(seq.mmsi, a, b, seq.points[a:b + 1], beh))
    return out


def config_with(config: SegmenterConfig, **overrides) -> SegmenterConfig:
    clean = {k: v for k, v in overrides.items() if v is not None}
    if "delta" in clean and isinstance(clean["delta"], str):
        clean["delta"] = math.inf if clean["delta"].lower() in ("inf", "+inf") else float(clean["delta"])
    return replace(config, **clean)
