"""Margin-based anomaly ranking and sample reweighting.

The margin of a sample is the maximum of its score row. Small margins sit
close to the decision boundary. Anomalies are ranked by margin, the margin
distribution is summarized in ten equal-width bins, and margins are turned
into sample weights for a weighted retrain of the output layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .elm import ElmModel, train_weighted, with_beta

ASCENDING = "ascending margin (boundary-closest first), ties by sample id"


def margin_scores(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] < 1:
        raise ValueError("scores must be a non-empty N x m matrix")
    return s.max(axis=1)


@dataclass(frozen=True)
class RankedAnomalies:
    entries: tuple  # (sample id, predicted class, margin)
    ordering: str = ASCENDING

    def __len__(self):
        return len(self.entries)

    @property
    def ids(self) -> list:
        return [e[0] for e in self.entries]


def rank_anomalies(ids: Sequence, predicted: Sequence, margins, anomaly_classes) -> RankedAnomalies:
    margins = np.asarray(margins, dtype=np.float64)
    if not (len(ids) == len(predicted) == margins.shape[0]):
        raise ValueError("ids, predicted classes and margins must be aligned")
    anomaly_classes = set(anomaly_classes)
    picked = [(ids[i], predicted[i], float(margins[i])) for i in range(len(ids))
              if predicted[i] in anomaly_classes]
    picked.sort(key=lambda e: (e[2], e[0]))
    return RankedAnomalies(tuple(picked))


@dataclass(frozen=True)
class DecileStats:
    edges: np.ndarray
    counts: np.ndarray
    head: tuple  # bottom 20% of the ranked sequence (sample indices)
    rear: tuple  # top 20%
    degenerate: bool = False

    def group_counts(self) -> tuple[int, int, int]:
        """(two lowest bins, six middle bins, two highest bins)."""
        if self.degenerate:
            return 0, int(self.counts.sum()), 0
        c = self.counts
        return int(c[:2].sum()), int(c[2:8].sum()), int(c[8:].sum())


def decile_histogram(margins, n_bins: int = 10) -> DecileStats:
    m = np.asarray(margins, dtype=np.float64).ravel()
    if m.shape[0] < n_bins:
        raise ValueError(f"need at least {n_bins} margins, got {m.shape[0]}")
    order = np.argsort(m, kind="mergesort")
    n_tail = int(np.floor(0.2 * m.shape[0]))
    head = tuple(int(i) for i in order[:n_tail])
    rear = tuple(int(i) for i in order[m.shape[0] - n_tail:])
    lo, hi = float(m.min()), float(m.max())
    if lo == hi:
        return DecileStats(np.array([lo, hi]), np.array([m.shape[0]]), head, rear, degenerate=True)
    counts, edges = np.histogram(m, bins=n_bins, range=(lo, hi))
    return DecileStats(edges, counts, head, rear)


@dataclass(frozen=True)
class SampleWeights:
    normalized: np.ndarray  # f_max / sum(f_max), sums to one over the weighted set
    mean_one: np.ndarray  # scaled so the weighted set averages one
    mode: str = "all"


def sample_weights(margins, subset=None, floor: float | None = None) -> SampleWeights:
    """Weights proportional to margin.

    Args:
        margins: per-sample row maxima.
        subset: optional boolean mask; only these samples are reweighted
            and all others keep weight one (``mean_one``) / zero (``normalized``).
        floor: optional lower clip applied to margins first, for data with
            non-positive margins.
    """
    m = np.asarray(margins, dtype=np.float64).ravel()
    if not np.all(np.isfinite(m)):
        raise ValueError("margins must be finite")
    if floor is not None:
        m = np.maximum(m, floor)
    mask = np.ones(m.shape[0], dtype=bool) if subset is None else np.asarray(subset, dtype=bool)
    total = float(m[mask].sum())
    if not total > 0:
        raise ValueError(f"sum of margins must be positive to build weights, got {total:.6g} "
                         f"over {int(mask.sum())} samples (min margin {m[mask].min() if mask.any() else 'n/a'})")
    normalized = np.where(mask, m / total, 0.0)
    mean_one = np.ones(m.shape[0])
    mean_one[mask] = normalized[mask] * mask.sum()
    return SampleWeights(normalized, mean_one, "all" if subset is None else "subset")


def reweight_retrain(model: ElmModel, h, t, weights) -> ElmModel:
    """New model whose output weights come from the weighted ridge solve."""
    w = weights.mean_one if isinstance(weights, SampleWeights) else weights
    return with_beta(model, train_weighted(h, t, model.c_reg, w))
