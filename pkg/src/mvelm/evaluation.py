"""ROC curves, AUC and the evaluation report written to disk."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # thresholds[0] is +inf (nothing flagged)
    positive: tuple
    n_pos: int
    n_neg: int

    @property
    def auc(self) -> float:
        return auc(self)

    def confusion(self, i: int) -> dict:
        """Counts at the ``i``-th operating point (flag scores >= thresholds[i])."""
        tp = int(round(self.tpr[i] * self.n_pos))
        fp = int(round(self.fpr[i] * self.n_neg))
        return {"E_P": self.n_pos, "E_N": self.n_neg, "E_TP": tp, "E_FP": fp,
                "E_FN": self.n_pos - tp, "E_TN": self.n_neg - fp}


def roc_curve(scores, labels, positive=(1, True)) -> RocCurve:
    """Threshold sweep over the sorted unique scores.

    ``labels`` are compared against ``positive`` (a label or a set of
    labels); everything else counts as negative. Higher scores mean
    "more positive".
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    pos_set = (positive,) if isinstance(positive, (str, int, bool)) else tuple(positive)
    is_pos = np.array([lab in pos_set for lab in labels], dtype=bool)
    if scores.shape[0] != is_pos.shape[0]:
        raise ValueError("scores and labels differ in length")
    n_pos = int(is_pos.sum())
    n_neg = int((~is_pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"need both classes, got {n_pos} positives and {n_neg} negatives")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    p = is_pos[order]
    tp = np.cumsum(p)
    fp = np.cumsum(~p)
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.shape[0] - 1]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    thresholds = np.r_[np.inf, s[last]]
    return RocCurve(fpr, tpr, thresholds, pos_set, n_pos, n_neg)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve."""
    return float(np.sum(np.diff(curve.fpr) * (curve.tpr[1:] + curve.tpr[:-1]) * 0.5))


def mann_whitney_auc(scores, is_positive) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), by direct pairwise comparison."""
    scores = np.asarray(scores, dtype=np.float64)
    is_positive = np.asarray(is_positive, dtype=bool)
    sp = scores[is_positive]
    sn = scores[~is_positive]
    wins = 0.0
    for v in sp:
        wins += np.sum(v > sn) + 0.5 * np.sum(v == sn)
    return float(wins / (sp.size * sn.size))


@dataclass
class EvalReport:
    curves: dict  # (detector, anomaly type) -> RocCurve
    provenance: dict = field(default_factory=dict)

    def auc_table(self) -> dict:
        return {key: curve.auc for key, curve in self.curves.items()}


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _fmt(x: float) -> str:
    return "inf" if np.isinf(x) else format(float(x), ".17g")


def emit_report(report: EvalReport, out_dir) -> list[Path]:
    """Write ``roc/<detector>__<type>.csv``, ``summary.csv`` and ``manifest.json``."""
    out = Path(out_dir)
    (out / "roc").mkdir(parents=True, exist_ok=True)
    written = []
    for (det, kind), curve in sorted(report.curves.items()):
        path = out / "roc" / f"{det}__{kind}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "rate_fp", "rate_tp"])
            for th, fp, tp in zip(curve.thresholds, curve.fpr, curve.tpr):
                w.writerow([_fmt(th), _fmt(fp), _fmt(tp)])
        written.append(path)
    summary = out / "summary.csv"
    with open(summary, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["detector", "anomaly_type", "auc", "n_pos", "n_neg"])
        for (det, kind), curve in sorted(report.curves.items()):
            w.writerow([det, kind, _fmt(curve.auc), curve.n_pos, curve.n_neg])
    written.append(summary)
    manifest = dict(report.provenance)
    manifest["config_hash"] = config_hash(report.provenance)
    manifest["cells"] = [f"{d}__{k}" for d, k in sorted(report.curves)]
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n",
                     encoding="utf-8")
    written.append(mpath)
    return written


def load_curve(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read back ``(thresholds, fpr, tpr)`` from an emitted ROC CSV."""
    th, fp, tp = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            th.append(float(row["threshold"]))
            fp.append(float(row["rate_fp"]))
            tp.append(float(row["rate_tp"]))
    return np.array(th), np.array(fp), np.array(tp)


def load_summary(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def iter_cells(detectors: Iterable[str], kinds: Iterable[str]):
    for d in detectors:
        for k in kinds:
            yield d, k
