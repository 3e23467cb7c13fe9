"""Comparison detectors: KNN on the concatenated feature vector, optionally
after PCA or RBF kernel PCA."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg as sla

from .numerics import NumericsError, as_matrix
from .schema import NORMAL

DEFAULT_K = 5
DEFAULT_COMPONENTS = 10


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.sum(a * a, axis=1)[:, None] - 2.0 * a @ b.T + np.sum(b * b, axis=1)[None, :]
    return np.maximum(d, 0.0)


@dataclass
class KnnResult:
    labels: list
    neighbor_labels: np.ndarray

    def score(self, positive) -> np.ndarray:
        """Fraction of the k neighbours whose label is in ``positive``."""
        pos = {positive} if isinstance(positive, str) else set(positive)
        mask = np.isin(self.neighbor_labels, list(pos))
        return mask.mean(axis=1)


def knn_classify(train_x, train_labels: Sequence, test_x, k: int = DEFAULT_K,
                 normal=NORMAL, block: int = 2048) -> KnnResult:
    """Euclidean k-nearest-neighbour vote; vote ties resolve toward ``normal``,
    otherwise toward the label seen first among the nearest neighbours."""
    train_x = as_matrix(train_x, "train_x")
    test_x = as_matrix(test_x, "test_x")
    if train_x.shape[0] == 0:
        raise ValueError("empty training set")
    if not 1 <= k <= train_x.shape[0]:
        raise ValueError(f"k must be in [1, {train_x.shape[0]}], got {k}")
    train_labels = np.asarray(train_labels, dtype=object)
    neigh = np.empty((test_x.shape[0], k), dtype=object)
    for start in range(0, test_x.shape[0], block):
        d = _sq_dists(test_x[start:start + block], train_x)
        if k < d.shape[1]:
            part = np.argpartition(d, k - 1, axis=1)[:, :k]
        else:
            part = np.tile(np.arange(d.shape[1]), (d.shape[0], 1))
        # stable order by (distance, train index) so results are deterministic
        rows = np.arange(d.shape[0])[:, None]
        order = np.lexsort((part, d[rows, part]), axis=1)
        idx = part[rows, order]
        neigh[start:start + block] = train_labels[idx]
    preds = []
    for row in neigh:
        counts = Counter(row)
        top = max(counts.values())
        winners = [lab for lab in row if counts[lab] == top]
        preds.append(normal if normal in winners else winners[0])
    return KnnResult(preds, neigh)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # n_components x d, rows ordered by decreasing variance
    explained_variance: np.ndarray


def pca_fit(train, n_components: int = DEFAULT_COMPONENTS) -> PcaModel:
    x = as_matrix(train, "train")
    d = x.shape[1]
    if not 1 <= n_components <= d:
        raise ValueError(f"n_components must be in [1, {d}], got {n_components}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / max(x.shape[0] - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:n_components]
    comps = evecs[:, order].T
    # fix the sign of each axis so fits are reproducible
    signs = np.sign(comps[np.arange(n_components), np.argmax(np.abs(comps), axis=1)])
    comps = comps * signs[:, None]
    return PcaModel(mean, comps, np.maximum(evals[order], 0.0))


def pca_transform(model: PcaModel, x) -> np.ndarray:
    return (as_matrix(x, "x") - model.mean) @ model.components.T


def explained_variance_ratio(train) -> np.ndarray:
    """Cumulative share of total variance captured by 1..d components."""
    model = pca_fit(train, as_matrix(train).shape[1])
    total = model.explained_variance.sum()
    return np.cumsum(model.explained_variance) / total if total > 0 else np.ones(len(model.mean))


@dataclass(frozen=True)
class KpcaModel:
    train: np.ndarray
    gamma: float
    alphas: np.ndarray  # n_train x n_components, scaled by 1/sqrt(eigenvalue)
    eigenvalues: np.ndarray
    k_col_mean: np.ndarray
    k_mean: float


def rbf_kernel(a, b, gamma: float) -> np.ndarray:
    return np.exp(-gamma * _sq_dists(a, b))


def kpca_fit(train, gamma: float, n_components: int = DEFAULT_COMPONENTS,
             psd_tol: float = 1e-8) -> KpcaModel:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    x = as_matrix(train, "train")
    n = x.shape[0]
    if not 1 <= n_components <= n:
        raise ValueError(f"n_components must be in [1, {n}], got {n_components}")
    k = rbf_kernel(x, x, gamma)
    col_mean = k.mean(axis=0)
    k_mean = float(col_mean.mean())
    kc = k - col_mean[None, :] - col_mean[:, None] + k_mean
    kc = 0.5 * (kc + kc.T)
    lo = sla.eigh(kc, eigvals_only=True, subset_by_index=[0, 0])[0]
    scale = max(1.0, float(np.abs(np.diag(kc)).max()))
    if lo < -psd_tol * scale * n:
        raise NumericsError(f"centered kernel is not PSD (min eigenvalue {lo:.3e})")
    evals, evecs = sla.eigh(kc, subset_by_index=[n - n_components, n - 1])
    evals, evecs = evals[::-1], evecs[:, ::-1]
    signs = np.sign(evecs[np.argmax(np.abs(evecs), axis=0), np.arange(n_components)])
    evecs = evecs * signs[None, :]
    pos = np.maximum(evals, 0.0)
    with np.errstate(divide="ignore"):
        inv = np.where(pos > 1e-12 * max(pos.max(), 1e-300), 1.0 / np.sqrt(pos), 0.0)
    return KpcaModel(x, gamma, evecs * inv[None, :], pos, col_mean, k_mean)


def kpca_transform(model: KpcaModel, x, block: int = 4096) -> np.ndarray:
    x = as_matrix(x, "x")
    out = np.empty((x.shape[0], model.alphas.shape[1]))
    for start in range(0, x.shape[0], block):
        kx = rbf_kernel(x[start:start + block], model.train, model.gamma)
        kx_c = kx - kx.mean(axis=1, keepdims=True) - model.k_col_mean[None, :] + model.k_mean
        out[start:start + block] = kx_c @ model.alphas
    return out
