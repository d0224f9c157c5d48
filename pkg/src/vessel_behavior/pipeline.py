"""Glue between the representation stages and the clustering model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clustering import ClusterModel, TrainConfig, track_clusters, train
from .core import ALL_BEHAVIORS, LabelSequence, PositionSequence, SubTrajectory
from .encoder import LEVEL_LABEL, LEVEL_SUBTRAJ, FeatureSequence, featurize_label_seq, featurize_subtraj

BEHAVIOR_CLASSES = [b.name for b in ALL_BEHAVIORS]


@dataclass
class Dataset:
    sequences: list[FeatureSequence]
    classes: list[str]
    level: str

    def __len__(self) -> int:
        return len(self.sequences)

    def __getitem__(self, i):
        return self.sequences[i]

    def __iter__(self):
        return iter(self.sequences)

    @property
    def input_dim(self) -> int:
        return self.sequences[0].features.shape[1]

    def truth(self, column: str = "vessel_type") -> list[str]:
        if column == "vessel_type":
            return [s.vessel_type for s in self.sequences]
        if column == "mmsi":
            return [s.mmsi for s in self.sequences]
        raise KeyError(f"unknown truth column {column!r}")


def subtraj_dataset(sequences: Sequence[PositionSequence],
                    segments: Sequence[Sequence[SubTrajectory]]) -> Dataset:
    return Dataset([featurize_subtraj(t, s) for t, s in zip(sequences, segments)],
                   list(BEHAVIOR_CLASSES), LEVEL_SUBTRAJ)


def label_categories(label_seqs: Sequence[LabelSequence]) -> list[str]:
    return sorted({p.port_label for ls in label_seqs for p in ls.label_points})


def label_dataset(label_seqs: Sequence[LabelSequence], categories: Sequence[str] | None = None,
                  grid_step: float | None = None) -> Dataset:
    cats = list(categories) if categories is not None else label_categories(label_seqs)
    return Dataset([featurize_label_seq(ls, cats, grid_step) for ls in label_seqs if len(ls)],
                   cats, LEVEL_LABEL)


def new_model(dataset: Dataset, k: int, hidden_dim: int = 150, dropout: float = 0.3,
              seed: int = 0) -> ClusterModel:
    return ClusterModel.create(dataset.input_dim, k, dataset.classes, hidden_dim=hidden_dim,
                               dropout=dropout, seed=seed, level=dataset.level)


def fit(dataset: Dataset, k: int, cfg: TrainConfig, hidden_dim: int = 150,
        dropout: float = 0.3) -> ClusterModel:
    model = new_model(dataset, k, hidden_dim, dropout, cfg.seed)
    return train(model, dataset.sequences, cfg)


def fit_track_clusters(dataset: Dataset, k: int, cfg: TrainConfig, hidden_dim: int = 150,
                       dropout: float = 0.3) -> np.ndarray:
    return track_clusters(fit(dataset, k, cfg, hidden_dim, dropout), dataset.sequences)


def parse_k_range(text: str) -> list[int]:
    """``"2..5"`` -> [2, 3, 4, 5]; also accepts ``"3"`` and ``"2,4,6"``."""
    text = text.strip()
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ValueError(f"empty K range {text!r}")
        return list(range(lo, hi + 1))
    return [int(x) for x in text.split(",") if x.strip()]
