"""Predictive clustering over encoded behavior sequences.

An LSTM encoder feeds two MLP heads: the assigner ``f`` (cluster
probabilities) and the predictor ``g`` (label distribution). Each cluster has
a centroid embedding; the predictor applied to a centroid gives the
cluster's label distribution. Training minimises

    L1 + L2 + alpha * KL

where L1 is the step cross-entropy of ``g(z)``, L2 the assignment-weighted
cross-entropy of the centroid predictions, and KL the divergence between the
direct prediction and the assignment-mixed centroid prediction. All three are
averaged over the valid steps of a batch.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import IO, Sequence

import numpy as np
from sklearn.cluster import KMeans

from .encoder import (
    LABEL_CONTINUOUS,
    LEVEL_SUBTRAJ,
    SUBTRAJ_CONTINUOUS,
    Adam,
    EncoderConfig,
    FeatureSequence,
    Normalizer,
    dropout_mask,
    glorot,
    init_lstm,
    lstm_backward,
    lstm_forward,
    pad_batch,
    softmax,
    tensor_from_json,
    tensor_to_json,
)

logger = logging.getLogger(__name__)

EPS = 1e-12
CHECKPOINT_FORMAT = "vessel-behavior-cluster-model"
CHECKPOINT_VERSION = 1

ENCODER_PARAMS = ("enc_W", "enc_b")
ASSIGNER_PARAMS = ("f_W1", "f_b1", "f_W2", "f_b2")
PREDICTOR_PARAMS = ("g_W1", "g_b1", "g_W2", "g_b2")
CENTROID_PARAMS = ("E",)


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 150
    pretrain_epochs: int = 60
    assigner_epochs: int = 200
    batch_size: int = 32
    alpha: float = 1.0
    seed: int = 0
    kl_to_assigner: bool = True
    kl_to_predictor: bool = True

    def __post_init__(self) -> None:
        if self.lr <= 0 or not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ValueError("learning rate must be positive and betas in [0, 1)")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.batch_size < 1 or self.epochs < 0 or self.pretrain_epochs < 0 or self.assigner_epochs < 0:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class ClusterModel:
    encoder: EncoderConfig
    n_clusters: int
    classes: list[str]
    params: dict[str, np.ndarray]
    mlp_hidden: int = 50
    level: str = LEVEL_SUBTRAJ
    normalizer: Normalizer | None = None
    loss_history: list[dict] = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @classmethod
    def create(cls, input_dim: int, n_clusters: int, classes: Sequence[str], hidden_dim: int = 150,
               mlp_hidden: int = 50, dropout: float = 0.3, seed: int = 0,
               level: str = LEVEL_SUBTRAJ) -> "ClusterModel":
        if n_clusters < 1:
            raise ValueError("n_clusters must be >= 1")
        if n_clusters == 1:
            logger.warning("K=1: the assigner is constant and clustering is trivial")
        enc = EncoderConfig(input_dim, hidden_dim, dropout, seed)
        rng = np.random.default_rng(seed)
        H, C = hidden_dim, len(classes)
        params = init_lstm(rng, input_dim, H)
        for head, out in (("f", n_clusters), ("g", C)):
            params[f"{head}_W1"] = glorot(rng, H, mlp_hidden)
            params[f"{head}_b1"] = np.zeros(mlp_hidden)
            params[f"{head}_W2"] = glorot(rng, mlp_hidden, out)
            params[f"{head}_b2"] = np.zeros(out)
        params["E"] = rng.normal(0.0, 0.1, size=(n_clusters, H))
        return cls(enc, n_clusters, list(classes), params, mlp_hidden, level)

    def prepare(self, seq: FeatureSequence) -> np.ndarray:
        if seq.features.shape[1] != self.encoder.input_dim:
            raise ValueError(
                f"feature width {seq.features.shape[1]} does not match model input_dim {self.encoder.input_dim}")
        return self.normalizer.transform(seq.features) if self.normalizer is not None else seq.features


def encode(model: ClusterModel, seq: FeatureSequence) -> np.ndarray:
    """Latent sequence (n, hidden_dim) in inference mode (no dropout)."""
    X = model.prepare(seq)[None]
    out, _ = lstm_forward(model.params, X)
    return out[0]


# -- heads ---------------------------------------------------------------

def _mlp_forward(params, head: str, X: np.ndarray, mask: np.ndarray | None):
    h = np.tanh(X @ params[f"{head}_W1"] + params[f"{head}_b1"])
    hd = h * mask if mask is not None else h
    logits = hd @ params[f"{head}_W2"] + params[f"{head}_b2"]
    return logits, (X, h, hd, mask)


def _mlp_backward(params, head: str, cache, dlogits: np.ndarray, grads: dict) -> np.ndarray:
    X, h, hd, mask = cache
    grads[f"{head}_W2"] = grads.get(f"{head}_W2", 0) + hd.T @ dlogits
    grads[f"{head}_b2"] = grads.get(f"{head}_b2", 0) + dlogits.sum(axis=0)
    dhd = dlogits @ params[f"{head}_W2"].T
    dh = dhd * mask if mask is not None else dhd
    da = dh * (1.0 - h * h)
    grads[f"{head}_W1"] = grads.get(f"{head}_W1", 0) + X.T @ da
    grads[f"{head}_b1"] = grads.get(f"{head}_b1", 0) + da.sum(axis=0)
    return da @ params[f"{head}_W1"].T


def assign(model: ClusterModel, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cluster probabilities for latent rows ``z`` and the hard assignment.

    ``np.argmax`` returns the first maximum, so ties go to the smallest index.
    """
    z = np.atleast_2d(z)
    logits, _ = _mlp_forward(model.params, "f", z, None)
    p = softmax(logits)
    return p, p.argmax(axis=1)


def predict(model: ClusterModel, z: np.ndarray) -> np.ndarray:
    logits, _ = _mlp_forward(model.params, "g", np.atleast_2d(z), None)
    return softmax(logits)


# -- losses -----------------------------------------------------------------

@dataclass
class HeadOutputs:
    F: np.ndarray      # (N, K) assignment probabilities
    Yhat: np.ndarray   # (N, C) direct prediction g(z)
    G: np.ndarray      # (K, C) centroid predictions g(e_k)
    y: np.ndarray      # (N,) target class per step


def losses_from_outputs(out: HeadOutputs) -> dict[str, float]:
    """Reduced forms: per-step means over all N valid steps of the batch."""
    N = len(out.y)
    rows = np.arange(N)
    l1 = -np.log(np.maximum(out.Yhat[rows, out.y], EPS))
    ell = -np.log(np.maximum(out.G[:, out.y].T, EPS))  # (N, K)
    l2 = (out.F * ell).sum(axis=1)
    ybar = out.F @ out.G
    kl = (out.Yhat * (np.log(np.maximum(out.Yhat, EPS)) - np.log(np.maximum(ybar, EPS)))).sum(axis=1)
    return {"L1": float(l1.mean()), "L2": float(l2.mean()), "KL": float(kl.mean())}


def _check_targets(y: np.ndarray, n_classes: int) -> None:
    if len(y) and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError("label index out of range")


@dataclass
class Batch:
    X: np.ndarray        # (B, T, d) normalised, padded
    valid: np.ndarray    # (B, T)
    y: np.ndarray        # (N,) targets of valid steps in row-major order


def make_batch(model: ClusterModel, seqs: Sequence[FeatureSequence]) -> Batch:
    X, valid = pad_batch([model.prepare(s) for s in seqs])
    y = np.concatenate([s.targets for s in seqs]).astype(np.int64)
    _check_targets(y, model.n_classes)
    return Batch(X, valid, y)


def forward(model: ClusterModel, batch: Batch, rng: np.random.Generator | None = None):
    """Full forward pass; ``rng`` switches on training-mode dropout."""
    p = model.params
    keep = model.encoder.keep
    H = model.encoder.hidden_dim
    B, T, _ = batch.X.shape
    m_lstm = dropout_mask(rng, (B, T, H), keep)
    Zpad, lcache = lstm_forward(p, batch.X, m_lstm)
    Z = Zpad[batch.valid]
    N, K = len(Z), model.n_clusters
    m_f = dropout_mask(rng, (N, model.mlp_hidden), keep)
    m_gz = dropout_mask(rng, (N, model.mlp_hidden), keep)
    m_ge = dropout_mask(rng, (K, model.mlp_hidden), keep)
    af, cf = _mlp_forward(p, "f", Z, m_f)
    agz, cgz = _mlp_forward(p, "g", Z, m_gz)
    age, cge = _mlp_forward(p, "g", p["E"], m_ge)
    out = HeadOutputs(softmax(af), softmax(agz), softmax(age), batch.y)
    return out, (lcache, cf, cgz, cge, Zpad.shape)


def loss_L1(model: ClusterModel, batch: Batch) -> float:
    return losses_from_outputs(forward(model, batch)[0])["L1"]


def loss_L2(model: ClusterModel, batch: Batch) -> float:
    return losses_from_outputs(forward(model, batch)[0])["L2"]


def loss_KL(model: ClusterModel, batch: Batch) -> float:
    return losses_from_outputs(forward(model, batch)[0])["KL"]


def total_loss(parts: dict[str, float], alpha: float, terms=("L1", "L2", "KL")) -> float:
    w = {"L1": 1.0, "L2": 1.0, "KL": alpha}
    return float(sum(w[t] * parts[t] for t in terms))


def backward(model: ClusterModel, batch: Batch, out: HeadOutputs, caches, alpha: float = 1.0,
             terms=("L1", "L2", "KL"), kl_to_assigner: bool = True, kl_to_predictor: bool = True
             ) -> dict[str, np.ndarray]:
    """Gradients of the selected loss terms with respect to every parameter."""
    p = model.params
    lcache, cf, cgz, cge, zshape = caches
    F, Yhat, G, y = out.F, out.Yhat, out.G, out.y
    N = len(y)
    rows = np.arange(N)
    onehot = np.zeros_like(Yhat)
    onehot[rows, y] = 1.0
    w = 1.0 / N

    dF = np.zeros_like(F)
    dG = np.zeros_like(G)          # w.r.t. probabilities
    d_agz = np.zeros_like(Yhat)    # w.r.t. logits of g(z)
    d_age = np.zeros_like(G)       # w.r.t. logits of g(e)

    if "L1" in terms:
        d_agz += (Yhat - onehot) * w
    if "L2" in terms:
        ell = -np.log(np.maximum(G[:, y].T, EPS))
        dF += ell * w
        d_age += (F.sum(axis=0)[:, None] * G - F.T @ onehot) * w
    if "KL" in terms and alpha > 0:
        ybar = F @ G
        floored = ybar > EPS
        r = np.where(floored, -Yhat / np.maximum(ybar, EPS), 0.0) * (alpha * w)
        if kl_to_predictor:
            v = (np.log(np.maximum(Yhat, EPS)) - np.log(np.maximum(ybar, EPS))) * (alpha * w)
            d_agz += Yhat * (v - (Yhat * v).sum(axis=1, keepdims=True))
            dG += F.T @ r
        if kl_to_assigner:
            dF += r @ G.T
    d_age += G * (dG - (G * dG).sum(axis=1, keepdims=True))
    d_af = F * (dF - (F * dF).sum(axis=1, keepdims=True))

    grads: dict[str, np.ndarray] = {}
    dZ = _mlp_backward(p, "f", cf, d_af, grads)
    dZ = dZ + _mlp_backward(p, "g", cgz, d_agz, grads)
    grads["E"] = _mlp_backward(p, "g", cge, d_age, grads)
    dZpad = np.zeros(zshape)
    dZpad[batch.valid] = dZ
    grads.update(lstm_backward(p, lcache, dZpad))
    return grads


def loss_and_grads(model: ClusterModel, batch: Batch, alpha: float = 1.0, rng=None,
                   terms=("L1", "L2", "KL"), kl_to_assigner: bool = True, kl_to_predictor: bool = True):
    out, caches = forward(model, batch, rng)
    parts = losses_from_outputs(out)
    grads = backward(model, batch, out, caches, alpha, terms, kl_to_assigner, kl_to_predictor)
    return total_loss(parts, alpha, terms), parts, grads


# -- training --------------------------------------------------------------

def _batches(n: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + size] for i in range(0, n, size)]


def _run_epochs(model, seqs, cfg: TrainConfig, rng, epochs: int, names, terms, phase: str,
                history: list[dict]) -> None:
    opt = Adam(model.params, cfg.lr, cfg.beta1, cfg.beta2, names=names)
    for epoch in range(epochs):
        acc = {"L1": 0.0, "L2": 0.0, "KL": 0.0, "total": 0.0}
        steps = 0
        for idx in _batches(len(seqs), cfg.batch_size, rng):
            batch = make_batch(model, [seqs[i] for i in idx])
            loss, parts, grads = loss_and_grads(
                model, batch, cfg.alpha, rng, terms, cfg.kl_to_assigner, cfg.kl_to_predictor)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite loss in {phase} epoch {epoch}: {parts}")
            n = len(batch.y)
            steps += n
            for k, v in parts.items():
                acc[k] += v * n
            acc["total"] += loss * n
            opt.step(model.params, grads)
        rec = {"phase": phase, "epoch": epoch, **{k: v / steps for k, v in acc.items()}}
        history.append(rec)
        logger.debug("%s epoch %d: %s", phase, epoch, rec)


def latents(model: ClusterModel, seqs: Sequence[FeatureSequence]) -> np.ndarray:
    """Inference-mode latents of every step, stacked."""
    return np.vstack([encode(model, s) for s in seqs])


def fit_normalizer(model: ClusterModel, seqs: Sequence[FeatureSequence]) -> None:
    cols = SUBTRAJ_CONTINUOUS if model.level == LEVEL_SUBTRAJ else LABEL_CONTINUOUS
    model.normalizer = Normalizer.fit(seqs, cols)


def kmeans_centroids(Z: np.ndarray, k: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """k-means++ seeded k-means; returns (centers, labels)."""
    distinct = len(np.unique(np.round(Z, 12), axis=0))
    if distinct < k:
        raise ValueError(f"only {distinct} distinct latent vectors for K={k}; use a smaller K")
    km = KMeans(n_clusters=k, init="k-means++", n_init=10, random_state=seed).fit(Z)
    return km.cluster_centers_.astype(np.float64), km.labels_.astype(np.int64)


def fit_assigner(model: ClusterModel, Z: np.ndarray, target: np.ndarray, cfg: TrainConfig,
                 rng: np.random.Generator) -> None:
    """Supervised fit of the assigner to fixed cluster targets on fixed latents."""
    names = ASSIGNER_PARAMS
    opt = Adam(model.params, max(cfg.lr, 1e-2), cfg.beta1, cfg.beta2, names=names)
    K = model.n_clusters
    onehot = np.zeros((len(Z), K))
    onehot[np.arange(len(Z)), target] = 1.0
    for _ in range(cfg.assigner_epochs):
        logits, cache = _mlp_forward(model.params, "f", Z, None)
        P = softmax(logits)
        grads: dict[str, np.ndarray] = {}
        _mlp_backward(model.params, "f", cache, (P - onehot) / len(Z), grads)
        opt.step(model.params, grads)


def init(model: ClusterModel, dataset: Sequence[FeatureSequence], cfg: TrainConfig | None = None
         ) -> ClusterModel:
    """Pretrain encoder+predictor, seed centroids by k-means, fit the assigner to them."""
    cfg = cfg or TrainConfig()
    n_steps = sum(len(s) for s in dataset)
    if n_steps < model.n_clusters:
        # fail before pretraining allocates (steps x K) assignment matrices
        raise ValueError(f"only {n_steps} steps for K={model.n_clusters}; use a smaller K")
    if model.normalizer is None:
        fit_normalizer(model, dataset)
    rng = np.random.default_rng(cfg.seed)
    _run_epochs(model, dataset, cfg, rng, cfg.pretrain_epochs, ENCODER_PARAMS + PREDICTOR_PARAMS,
                ("L1",), "pretrain", model.loss_history)
    Z = latents(model, dataset)
    centers, labels = kmeans_centroids(Z, model.n_clusters, cfg.seed)
    model.params["E"] = centers
    fit_assigner(model, Z, labels, cfg, rng)
    return model


def train(model: ClusterModel, dataset: Sequence[FeatureSequence], cfg: TrainConfig | None = None,
          initialize: bool = True) -> ClusterModel:
    """Joint training of encoder, assigner, predictor and centroids.

    Returns the model; per-epoch losses accumulate in ``model.loss_history``.

    Raises:
        NumericalError: if any batch loss is not finite.
    """
    cfg = cfg or TrainConfig()
    if not dataset:
        raise ValueError("empty training set")
    if initialize:
        init(model, dataset, cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    names = ENCODER_PARAMS + ASSIGNER_PARAMS + PREDICTOR_PARAMS + CENTROID_PARAMS
    _run_epochs(model, dataset, cfg, rng, cfg.epochs, names, ("L1", "L2", "KL"), "joint",
                model.loss_history)
    return model


# -- inference ------------------------------------------------------------

@dataclass
class EvolutionTrace:
    mmsi: str
    relative_time: np.ndarray
    cluster: np.ndarray
    probs: np.ndarray
    y_hat: np.ndarray
    y_bar: np.ndarray

    def __len__(self) -> int:
        return len(self.cluster)

    def majority(self, start: int = 0, end: int | None = None) -> int:
        counts = np.bincount(self.cluster[start:end], minlength=self.probs.shape[1])
        return int(counts.argmax())

    def to_record(self) -> dict:
        return {
            "mmsi": self.mmsi,
            "relative_time": self.relative_time.tolist(),
            "cluster": self.cluster.tolist(),
            "probs": self.probs.tolist(),
            "y_hat": self.y_hat.tolist(),
            "y_bar": self.y_bar.tolist(),
        }


def trace(model: ClusterModel, seq: FeatureSequence) -> EvolutionTrace:
    z = encode(model, seq)
    probs, hard = assign(model, z)
    y_hat = predict(model, z)
    G = predict(model, model.params["E"])
    return EvolutionTrace(seq.mmsi, np.asarray(seq.relative_time, dtype=np.float64), hard, probs,
                          y_hat, probs @ G)


def track_clusters(model: ClusterModel, dataset: Sequence[FeatureSequence]) -> np.ndarray:
    """Majority-vote cluster per track (ties to the smallest id)."""
    return np.array([trace(model, s).majority() for s in dataset], dtype=np.int64)


def step_clusters(model: ClusterModel, dataset: Sequence[FeatureSequence]) -> np.ndarray:
    return np.concatenate([trace(model, s).cluster for s in dataset])


# -- checkpoint -------------------------------------------------------------

def to_checkpoint(model: ClusterModel) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "level": model.level,
        "encoder": asdict(model.encoder),
        "n_clusters": model.n_clusters,
        "mlp_hidden": model.mlp_hidden,
        "classes": list(model.classes),
        "normalizer": model.normalizer.to_dict() if model.normalizer is not None else None,
        "params": {k: tensor_to_json(v) for k, v in sorted(model.params.items())},
        "loss_history": model.loss_history,
    }


def from_checkpoint(d: dict) -> ClusterModel:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a cluster-model checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')}")
    return ClusterModel(
        encoder=EncoderConfig(**d["encoder"]),
        n_clusters=int(d["n_clusters"]),
        classes=list(d["classes"]),
        params={k: tensor_from_json(v) for k, v in d["params"].items()},
        mlp_hidden=int(d["mlp_hidden"]),
        level=d["level"],
        normalizer=Normalizer.from_dict(d["normalizer"]) if d.get("normalizer") else None,
        loss_history=list(d.get("loss_history", [])),
    )


def save_model(model: ClusterModel, fh: IO[str]) -> None:
    json.dump(to_checkpoint(model), fh)
    fh.write("\n")


def load_model(fh: IO[str]) -> ClusterModel:
    return from_checkpoint(json.load(fh))
