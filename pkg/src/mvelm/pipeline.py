"""End-to-end operations on datasets and checkpoints, shared by the CLI and
the acceptance suite."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import baselines, fusion, ranking
from .checkpoint import Checkpoint
from .elm import DEFAULT_C, DEFAULT_N_HIDDEN, Activation, encode_labels, hidden_output, init_hidden, train_weighted
from .evaluation import EvalReport, config_hash, roc_curve
from .ingest import ChunkConfig, Dataset, apply_normalizer, chunk_stream, fit_normalizer, split_offline
from .numerics import SeededRng, solve_spd
from .schema import ANOMALY_TYPES, CLASSES, NORMAL, VIEW_NAMES

log = logging.getLogger(__name__)

DETECTORS = ("mv_elm", "origif_knn", "pca_knn", "kernelpca_knn")


class DataError(ValueError):
    """Input data cannot be used for the requested operation."""


def _normalized(ckpt: Checkpoint, data: Dataset) -> Dataset:
    return data if ckpt.normalizer is None else apply_normalizer(ckpt.normalizer, data)


def hidden_views(ckpt: Checkpoint, data: Dataset) -> list[np.ndarray]:
    norm = _normalized(ckpt, data)
    return [hidden_output(s.layer, norm.view(s.name)) for s in ckpt.specs]


def train(data: Dataset, views: Sequence[str] = VIEW_NAMES, n_hidden: int = DEFAULT_N_HIDDEN,
          c_reg: float = DEFAULT_C, r: float = fusion.DEFAULT_R, tol: float = fusion.DEFAULT_TOL,
          max_iter: int = fusion.DEFAULT_MAX_ITER, activation: Activation | None = None,
          seed: int = 0, classes: Sequence[str] = CLASSES) -> Checkpoint:
    """Fit the normalizer and the fused model on ``data`` (the offline split)."""
    if not data.is_labeled:
        raise DataError("training data contains unlabeled samples")
    unknown = sorted(set(views) - set(VIEW_NAMES))
    if unknown or not views:
        raise DataError(f"unknown views {unknown}; choose from {list(VIEW_NAMES)}")
    norm = fit_normalizer(data)
    data_n = apply_normalizer(norm, data)
    root = SeededRng(seed)
    act = activation or Activation()
    # layer for a view depends only on (seed, view), not on which other views are used
    specs = tuple(
        fusion.ViewSpec(v, init_hidden(11, n_hidden, act, root.spawn(VIEW_NAMES.index(v) + 1)))
        for v in views
    )
    t = encode_labels(data_n.labels, classes)
    hs = [hidden_output(s.layer, data_n.view(s.name)) for s in specs]
    state = fusion.fuse_train(hs, t, r=r, c_reg=c_reg, tol=tol, max_iter=max_iter)
    online = fusion.init_online_fusion(hs, t, state)
    return Checkpoint(specs=specs, classes=tuple(classes), k=state.k, r=state.r, c_reg=c_reg,
                      beta=online.beta, g=online.online.g, n_seen=len(data), seed=seed,
                      normalizer=norm, objective_trace=state.objective_trace,
                      converged=state.converged, n_iter=state.n_iter,
                      config={"views": list(views), "n_hidden": n_hidden, "c_reg": c_reg, "r": r,
                              "tol": tol, "max_iter": max_iter, "activation": act.kind,
                              "rbf_gamma": act.rbf_gamma, "seed": seed, "n_train": len(data)})


def score(ckpt: Checkpoint, data: Dataset, beta: np.ndarray | None = None) -> np.ndarray:
    norm = _normalized(ckpt, data)
    state = ckpt.fusion_state()
    h = fusion.fused_hidden(ckpt.specs, state.view_weights(), [norm.view(s.name) for s in ckpt.specs])
    return h @ (ckpt.beta if beta is None else beta)


def anomaly_margin(scores: np.ndarray, classes: Sequence[str], kind: str) -> np.ndarray:
    """Detector score for one anomaly type: its column minus the normal column."""
    return scores[:, list(classes).index(kind)] - scores[:, list(classes).index(NORMAL)]


@dataclass
class Predictions:
    ids: np.ndarray
    timestamps: np.ndarray
    hosts: list
    labels: list
    scores: np.ndarray
    classes: tuple

    @property
    def predicted(self) -> list:
        idx = np.argmax(self.scores, axis=1)
        return [self.classes[i] for i in idx]

    @property
    def margins(self) -> np.ndarray:
        return self.scores.max(axis=1)

    def __len__(self):
        return self.ids.shape[0]


def detect(ckpt: Checkpoint, data: Dataset, chunk_size: int = 100, update: bool = True,
           protocol: str = "prequential", id_offset: int = 0,
           feed=None) -> tuple[Predictions, Checkpoint]:
    """Online detection loop.

    ``prequential``: every chunk is scored with the current model and then,
    if labeled and ``update`` is set, absorbed. ``split``: the first half of
    ``data`` only updates the model, the second half is only scored.
    ``feed`` optionally wraps the chunk iterator (e.g. ``ingest.bounded_feed``).
    """
    if protocol not in ("prequential", "split"):
        raise ValueError("protocol must be 'prequential' or 'split'")
    state = ckpt.online_state()
    state_changed = False
    ids = np.arange(len(data)) + id_offset
    out_rows, out_scores = [], []
    cfg = ChunkConfig(size=chunk_size)
    if protocol == "split":
        half = len(data) // 2
        train_part, test_part = data[:half], data[half:]
        if update:
            for chunk in _iter(chunk_stream(train_part, cfg), feed):
                state, changed = _absorb(ckpt, state, chunk.data)
                state_changed |= changed
        data = test_part
        ids = ids[half:]
        scoring = [(0, data)]
        update_after = False
    else:
        scoring = ((c.start, c.data) for c in _iter(chunk_stream(data, cfg), feed))
        update_after = update
    for start, block in scoring:
        s = score(ckpt, block, beta=state.beta)
        out_scores.append(s)
        out_rows.append(np.arange(start, start + len(block)))
        if update_after:
            state, changed = _absorb(ckpt, state, block)
            state_changed |= changed
    rows = np.concatenate(out_rows) if out_rows else np.zeros(0, dtype=int)
    preds = Predictions(ids=ids[rows], timestamps=data.timestamps[rows],
                        hosts=[data.hosts[i] for i in rows], labels=[data.labels[i] for i in rows],
                        scores=np.vstack(out_scores) if out_scores else np.zeros((0, len(ckpt.classes))),
                        classes=ckpt.classes)
    new_ckpt = ckpt.with_online(state, None) if state_changed else ckpt
    return preds, new_ckpt


def _iter(chunks, feed):
    return chunks if feed is None else feed(chunks)


def _absorb(ckpt: Checkpoint, state, block: Dataset):
    labeled = np.array([lab is not None for lab in block.labels], dtype=bool)
    if not labeled.any():
        return state, False
    block = block[labeled]
    t = encode_labels(block.labels, ckpt.classes)
    return fusion.online_fuse_update(state, hidden_views(ckpt, block), t), True


def retrain(ckpt: Checkpoint, data: Dataset, uniform: bool = False, anomalies_only: bool = False,
            margin_floor: float | None = None) -> tuple[Checkpoint, ranking.SampleWeights]:
    """Margin-weighted retrain of the output weights on ``data`` with frozen ``k``.

    The running inverse Gram is rebuilt from the same weighted system so
    later online updates continue from the retrained model.
    """
    if not data.is_labeled:
        raise DataError("retraining data contains unlabeled samples")
    margins = np.ones(len(data)) if uniform else ranking.margin_scores(score(ckpt, data))
    subset = None
    if anomalies_only:
        subset = np.array([lab != NORMAL for lab in data.labels])
        if not subset.any():
            raise DataError("no anomaly samples to reweight")
    weights = ranking.sample_weights(margins, subset=subset, floor=margin_floor)
    t = encode_labels(data.labels, ckpt.classes)
    h_stack, t_stack = fusion.stack_views(hidden_views(ckpt, data), t, ckpt.k, ckpt.r)
    w_stack = np.tile(weights.mean_one, len(ckpt.specs))
    beta = train_weighted(h_stack, t_stack, ckpt.c_reg, w_stack)
    gram = (h_stack * w_stack[:, None]).T @ h_stack
    gram[np.diag_indices_from(gram)] += 1.0 / ckpt.c_reg
    g = solve_spd(gram, np.eye(gram.shape[0]))
    new = replace(ckpt, beta=beta, g=0.5 * (g + g.T), n_seen=len(data), revision=ckpt.revision + 1)
    return new, weights


@dataclass(frozen=True)
class BaselineConfig:
    knn_k: int = baselines.DEFAULT_K
    pca_components: int = baselines.DEFAULT_COMPONENTS
    kpca_gamma: float = 1.0 / 44.0
    kpca_components: int = baselines.DEFAULT_COMPONENTS


def evaluate(ckpt: Checkpoint, data: Dataset, offline_fraction: float = 0.2,
             cfg: BaselineConfig = BaselineConfig(), provenance: dict | None = None) -> EvalReport:
    """One-vs-normal ROC per anomaly type for MV-ELM and the three KNN baselines.

    Baselines are fit on the offline split (normalized with the checkpoint's
    normalizer); every detector is scored on the remaining samples.
    """
    if ckpt.normalizer is None:
        raise DataError("checkpoint has no normalizer")
    if not data.is_labeled:
        raise DataError("evaluation data must be labeled")
    train_part, test_part = split_offline(data, offline_fraction)
    tr = apply_normalizer(ckpt.normalizer, train_part)
    te = apply_normalizer(ckpt.normalizer, test_part)
    labels = np.array(te.labels, dtype=object)
    mv_scores = score(ckpt, test_part)

    knn_raw = baselines.knn_classify(tr.values, tr.labels, te.values, cfg.knn_k)
    pca = baselines.pca_fit(tr.values, cfg.pca_components)
    knn_pca = baselines.knn_classify(baselines.pca_transform(pca, tr.values), tr.labels,
                                     baselines.pca_transform(pca, te.values), cfg.knn_k)
    kpca = baselines.kpca_fit(tr.values, cfg.kpca_gamma, cfg.kpca_components)
    knn_kpca = baselines.knn_classify(baselines.kpca_transform(kpca, tr.values), tr.labels,
                                      baselines.kpca_transform(kpca, te.values), cfg.knn_k)

    curves = {}
    missing = []
    for kind in ANOMALY_TYPES:
        mask = (labels == NORMAL) | (labels == kind)
        if not (labels[mask] == kind).any() or not (labels[mask] == NORMAL).any():
            missing.append(kind)
            continue
        per_detector = {
            "mv_elm": anomaly_margin(mv_scores, ckpt.classes, kind),
            "origif_knn": knn_raw.score(kind),
            "pca_knn": knn_pca.score(kind),
            "kernelpca_knn": knn_kpca.score(kind),
        }
        for det in DETECTORS:
            curves[(det, kind)] = roc_curve(per_detector[det][mask], labels[mask], kind)
    prov = dict(provenance or {})
    prov.update({
        "offline_fraction": offline_fraction,
        "knn_k": cfg.knn_k,
        "pca_components": cfg.pca_components,
        "kpca_gamma": cfg.kpca_gamma,
        "kpca_components": cfg.kpca_components,
        "checkpoint_config": ckpt.config,
        "n_train": len(train_part),
        "n_test": len(test_part),
        "missing_anomaly_types": missing,
    })
    prov["config_hash"] = config_hash(prov)
    return EvalReport(curves, prov)


PRED_FIXED = ("sample_id", "timestamp", "host", "label", "predicted_class", "margin")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_predictions(path, preds: Predictions) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PRED_FIXED + tuple(f"score_{c}" for c in preds.classes))
        predicted = preds.predicted
        margins = preds.margins
        for i in range(len(preds)):
            w.writerow([int(preds.ids[i]), _fmt(preds.timestamps[i]), preds.hosts[i],
                        preds.labels[i] or "", predicted[i], _fmt(margins[i])]
                       + [_fmt(x) for x in preds.scores[i]])


def read_predictions(path) -> Predictions:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:len(PRED_FIXED)]) != PRED_FIXED:
            raise DataError(f"{path}: not a predictions file")
        classes = tuple(h[len("score_"):] for h in header[len(PRED_FIXED):])
        rows = [r for r in reader if r]
    if not rows:
        raise DataError(f"{path}: no predictions")
    return Predictions(
        ids=np.array([int(r[0]) for r in rows]),
        timestamps=np.array([float(r[1]) for r in rows]),
        hosts=[r[2] for r in rows],
        labels=[r[3] or None for r in rows],
        scores=np.array([[float(x) for x in r[len(PRED_FIXED):]] for r in rows]),
        classes=classes,
    )
