"""Recurrent latent encoding of behavior sequences.

Featurization for both hierarchy levels, per-feature normalisation, a
single-layer LSTM with hand-written backpropagation through time, inverted
dropout and an Adam optimiser. Everything is float64 numpy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .core import N_BEHAVIORS, LabelSequence, PositionSequence, SubTrajectory
from .segmentation import point_labels

logger = logging.getLogger(__name__)

LEVEL_SUBTRAJ = "subtraj"
LEVEL_LABEL = "label"


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    hidden_dim: int = 150
    # drop probability; the reported setting is read as keep-probability 0.7
    dropout: float = 0.3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ValueError("dimensions must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout probability must lie in [0, 1)")

    @property
    def keep(self) -> float:
        return 1.0 - self.dropout


@dataclass(frozen=True)
class FeatureStep:
    relative_time: float
    features: np.ndarray


@dataclass
class FeatureSequence:
    """A featurized track: one row per step plus the per-step target class."""

    mmsi: str
    relative_time: np.ndarray
    features: np.ndarray
    targets: np.ndarray
    vessel_type: str = "other"
    level: str = LEVEL_SUBTRAJ

    def __len__(self) -> int:
        return len(self.relative_time)

    @property
    def steps(self) -> Iterator[FeatureStep]:
        for t, x in zip(self.relative_time, self.features):
            yield FeatureStep(float(t), x)


# -- featurization ------------------------------------------------------------

SUBTRAJ_CONTINUOUS = (0, 1)  # relative time, sog
SUBTRAJ_DIM = 4 + N_BEHAVIORS


def featurize_subtraj(T: PositionSequence, segments: Sequence[SubTrajectory]) -> FeatureSequence:
    """One step per position: (time, sog, sin cog, cos cog, behavior one-hot)."""
    codes = point_labels(T, segments)
    n = len(T)
    t = (T.timestamps - T.timestamps[0]).astype(np.float64)
    rad = np.radians(T.cog)
    x = np.zeros((n, SUBTRAJ_DIM))
    x[:, 0] = t
    x[:, 1] = T.sog
    x[:, 2] = np.sin(rad)
    x[:, 3] = np.cos(rad)
    x[np.arange(n), 4 + codes] = 1.0
    return FeatureSequence(T.mmsi, t, x, codes, T.vessel_type.value, LEVEL_SUBTRAJ)


LABEL_CONTINUOUS = (0, 1, 2)  # relative time, lat, lon


def featurize_label_seq(ls: LabelSequence, categories: Sequence[str],
                        grid_step: float | None = None) -> FeatureSequence:
    """Label-level steps with hold-last semantics.

    Without ``grid_step`` there is one step per label point. With it, steps
    sit on a uniform clock from the first to the last label time and carry
    the most recent label point's features.
    """
    if len(ls) == 0:
        raise ValueError("label sequence is empty")
    cats = list(categories)
    pts = ls.label_points
    times = np.array([p.timestamp for p in pts], dtype=np.float64)
    rel = times - times[0]
    if grid_step is None:
        grid = rel
        src = np.arange(len(pts))
    else:
        if grid_step <= 0:
            raise ValueError("grid_step must be positive")
        grid = np.arange(0.0, rel[-1] + 0.5 * grid_step, grid_step)
        if len(grid) == 0 or grid[-1] < rel[-1]:
            grid = np.append(grid, rel[-1])
        src = np.searchsorted(rel, grid, side="right") - 1
    x = np.zeros((len(grid), 3 + len(cats)))
    targets = np.zeros(len(grid), dtype=np.int64)
    for row, i in enumerate(src):
        p = pts[i]
        k = cats.index(p.port_label)
        x[row, 0] = grid[row]
        x[row, 1] = p.lat
        x[row, 2] = p.lon
        x[row, 3 + k] = 1.0
        targets[row] = k
    return FeatureSequence(ls.mmsi, grid.astype(np.float64), x, targets, ls.vessel_type.value, LEVEL_LABEL)


@dataclass
class Normalizer:
    """z-normalisation of selected feature columns; other columns pass through."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, sequences: Sequence[FeatureSequence], columns: Sequence[int]) -> "Normalizer":
        width = sequences[0].features.shape[1]
        mean = np.zeros(width)
        std = np.ones(width)
        allx = np.vstack([s.features for s in sequences])
        for c in columns:
            mean[c] = allx[:, c].mean()
            sd = allx[:, c].std()
            if sd > 0:
                std[c] = sd
            else:
                logger.warning("feature column %d is constant; using unit variance", c)
        return cls(mean, std)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))


# -- numerics -------------------------------------------------------------

def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(a: np.ndarray) -> np.ndarray:
    a = a - a.max(axis=-1, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=-1, keepdims=True)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def init_lstm(rng: np.random.Generator, input_dim: int, hidden: int) -> dict[str, np.ndarray]:
    W = np.concatenate([glorot(rng, input_dim + hidden, hidden) for _ in range(4)], axis=1)
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0  # forget gate
    return {"enc_W": W, "enc_b": b}


def dropout_mask(rng: np.random.Generator | None, shape, keep: float) -> np.ndarray | None:
    if rng is None or keep >= 1.0:
        return None
    return (rng.random(shape) < keep) / keep


@dataclass
class LSTMCache:
    xh: list = field(default_factory=list)
    gates: list = field(default_factory=list)
    c: list = field(default_factory=list)
    tanh_c: list = field(default_factory=list)
    mask: np.ndarray | None = None


def lstm_forward(params: dict[str, np.ndarray], X: np.ndarray, mask: np.ndarray | None = None
                 ) -> tuple[np.ndarray, LSTMCache]:
    """Run the recurrence over a padded batch ``X`` of shape (B, T, d).

    Gate order in the packed weight matrix: input, forget, output, candidate.
    ``mask`` is an optional inverted-dropout mask applied to the outputs.
    """
    W, b = params["enc_W"], params["enc_b"]
    B, T, _ = X.shape
    H = b.shape[0] // 4
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    out = np.empty((B, T, H))
    cache = LSTMCache(c=[c])
    for t in range(T):
        xh = np.concatenate([X[:, t], h], axis=1)
        a = xh @ W + b
        g = np.empty_like(a)
        g[:, :3 * H] = sigmoid(a[:, :3 * H])
        g[:, 3 * H:] = np.tanh(a[:, 3 * H:])
        c = g[:, H:2 * H] * c + g[:, :H] * g[:, 3 * H:]
        tc = np.tanh(c)
        h = g[:, 2 * H:3 * H] * tc
        out[:, t] = h
        cache.xh.append(xh)
        cache.gates.append(g)
        cache.c.append(c)
        cache.tanh_c.append(tc)
    if mask is not None:
        cache.mask = mask
        out = out * mask
    return out, cache


def lstm_backward(params: dict[str, np.ndarray], cache: LSTMCache, dOut: np.ndarray
                  ) -> dict[str, np.ndarray]:
    W = params["enc_W"]
    H = W.shape[1] // 4
    d_in = W.shape[0] - H
    if cache.mask is not None:
        dOut = dOut * cache.mask
    dW = np.zeros_like(W)
    db = np.zeros(4 * H)
    B, T, _ = dOut.shape
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        g = cache.gates[t]
        i, f, o, cand = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        tc = cache.tanh_c[t]
        dh = dOut[:, t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        da = np.empty((B, 4 * H))
        da[:, :H] = dc * cand * i * (1.0 - i)
        da[:, H:2 * H] = dc * cache.c[t] * f * (1.0 - f)
        da[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        da[:, 3 * H:] = dc * i * (1.0 - cand * cand)
        dW += cache.xh[t].T @ da
        db += da.sum(axis=0)
        dh_next = (da @ W.T)[:, d_in:]
        dc_next = dc * f
    return {"enc_W": dW, "enc_b": db}


class Adam:
    """Adam over a dict of named parameter arrays, updated in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, names: Sequence[str] | None = None):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.names = list(names) if names is not None else list(params)
        self.m = {k: np.zeros_like(params[k]) for k in self.names}
        self.v = {k: np.zeros_like(params[k]) for k in self.names}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k in self.names:
            g = grads.get(k)
            if g is None:
                continue
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def pad_batch(arrays: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Stack variable-length (n_i, d) arrays into (B, T, d) plus a boolean validity mask."""
    T = max(len(a) for a in arrays)
    d = arrays[0].shape[1]
    X = np.zeros((len(arrays), T, d))
    valid = np.zeros((len(arrays), T), dtype=bool)
    for i, a in enumerate(arrays):
        X[i, :len(a)] = a
        valid[i, :len(a)] = True
    return X, valid


def tensor_to_json(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": a.ravel(order="C").tolist()}


def tensor_from_json(d: dict) -> np.ndarray:
    return np.array(d["data"], dtype=np.float64).reshape(d["shape"], order="C")
