"""External clustering metrics (purity, ARI, NMI) and the K-sweep harness."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import IO, Callable, Iterable, Sequence

import numpy as np
from scipy.special import comb

logger = logging.getLogger(__name__)


def contingency(assignments: Sequence, truth: Sequence) -> np.ndarray:
    """Counts n[i, j] of items in cluster i and class j (ids compacted)."""
    a = np.asarray(assignments)
    t = np.asarray(truth)
    if a.shape != t.shape or a.ndim != 1:
        raise ValueError("assignments and truth must be 1-d of equal length")
    if len(a) == 0:
        raise ValueError("need at least one item")
    _, ai = np.unique(a, return_inverse=True)
    _, ti = np.unique(t, return_inverse=True)
    n = np.zeros((ai.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(n, (ai, ti), 1)
    return n


def purity(assignments, truth) -> float:
    n = contingency(assignments, truth)
    return float(n.max(axis=1).sum() / n.sum())


def ari(assignments, truth) -> float:
    """Adjusted Rand index from the contingency table.

    When both partitions are trivial in the same way (the denominator is zero)
    the partitions agree perfectly and 1.0 is returned.
    """
    n = contingency(assignments, truth)
    N = int(n.sum())
    if N < 2:
        raise ValueError("ARI needs at least 2 items")
    sum_ij = comb(n, 2).sum()
    sum_a = comb(n.sum(axis=1), 2).sum()
    sum_b = comb(n.sum(axis=0), 2).sum()
    expected = sum_a * sum_b / comb(N, 2)
    denom = 0.5 * (sum_a + sum_b) - expected
    if denom == 0:
        return 1.0
    return float((sum_ij - expected) / denom)


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(assignments, truth) -> float:
    """2*MI / (H(clusters) + H(classes)), natural log; 1.0 when both entropies vanish."""
    n = contingency(assignments, truth).astype(np.float64)
    N = n.sum()
    h_c = _entropy(n.sum(axis=1))
    h_t = _entropy(n.sum(axis=0))
    if h_c + h_t == 0:
        return 1.0
    pij = n / N
    outer = np.outer(n.sum(axis=1), n.sum(axis=0)) / (N * N)
    nz = pij > 0
    mi = float((pij[nz] * np.log(pij[nz] / outer[nz])).sum())
    return max(0.0, 2.0 * mi / (h_c + h_t))


def evaluate(assignments, truth) -> dict[str, float]:
    return {"purity": purity(assignments, truth), "nmi": nmi(assignments, truth), "ari": ari(assignments, truth)}


def majority_vote(step_clusters: Sequence[int]) -> int:
    return int(np.bincount(np.asarray(step_clusters)).argmax())


@dataclass
class SweepRow:
    k: int
    purity: float
    nmi: float
    ari: float
    error: str | None = None


def sweep_k(
    dataset,
    k_values: Iterable[int],
    train_config,
    truth: Sequence,
    fit: Callable | None = None,
) -> list[SweepRow]:
    """Train one model per K and score its track-level clusters against ``truth``.

    ``fit(dataset, k, train_config)`` returns per-track cluster ids; the
    default trains a fresh cluster model with the config's seed, so reruns give
    identical tables. A failure at one K is recorded in that row and the sweep
    continues.
    """
    if fit is None:
        from .pipeline import fit_track_clusters as fit
    rows = []
    for k in k_values:
        try:
            assigned = fit(dataset, k, train_config)
            m = evaluate(assigned, truth)
            rows.append(SweepRow(k, m["purity"], m["nmi"], m["ari"]))
        except Exception as exc:  # noqa: BLE001 - one bad K must not end the sweep
            logger.error("K=%d failed: %s", k, exc)
            nan = float("nan")
            rows.append(SweepRow(k, nan, nan, nan, str(exc)))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["K", "purity", "nmi", "ari"])
    for r in rows:
        w.writerow([r.k, repr(float(r.purity)), repr(float(r.nmi)), repr(float(r.ari))])
