import numpy as np
import pytest

from mvelm import evaluation
from mvelm.evaluation import EvalReport, RocCurve

from oracles import mann_whitney


def test_perfect_separation():
    curve = evaluation.roc_curve([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0], positive=1)
    assert curve.auc == 1.0
    assert any(f == 0.0 and t == 1.0 for f, t in zip(curve.fpr, curve.tpr))


def test_random_scores_auc_near_half():
    rg = np.random.default_rng(2024)
    scores = rg.normal(size=2000)
    labels = rg.permutation(np.r_[np.ones(1000, int), np.zeros(1000, int)])
    assert 0.45 <= evaluation.roc_curve(scores, labels, positive=1).auc <= 0.55


def test_reversed_scores(rng):
    s = rng.normal(size=300)
    lab = rng.integers(0, 2, 300)
    a = evaluation.roc_curve(s, lab, positive=1).auc
    b = evaluation.roc_curve(-s, lab, positive=1).auc
    assert a + b == pytest.approx(1.0, abs=1e-12)


def test_auc_of_fixed_curves():
    diag = RocCurve(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([np.inf, 0.0]), (1,), 1, 1)
    step = RocCurve(np.array([0.0, 0.0, 1.0]), np.array([0.0, 1.0, 1.0]),
                    np.array([np.inf, 1.0, 0.0]), (1,), 1, 1)
    assert evaluation.auc(diag) == 0.5 and evaluation.auc(step) == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_trapezoid_equals_mann_whitney(seed):
    rg = np.random.default_rng(seed)
    scores = np.round(rg.normal(size=250), 1)  # rounding forces ties
    labels = rg.integers(0, 2, 250)
    auc = evaluation.roc_curve(scores, labels, positive=1).auc
    assert abs(auc - mann_whitney(scores, labels == 1)) < 1e-9
    assert abs(auc - evaluation.mann_whitney_auc(scores, labels == 1)) < 1e-9


def test_curve_monotone_and_confusion(rng):
    scores = rng.normal(size=100)
    labels = rng.choice(["normal", "a", "b"], size=100)
    curve = evaluation.roc_curve(scores, labels, positive=("a", "b"))
    assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
    assert curve.fpr[-1] == 1.0 and curve.tpr[-1] == 1.0
    last = curve.confusion(len(curve.fpr) - 1)
    assert last["E_TP"] == last["E_P"] and last["E_TN"] == 0
    first = curve.confusion(0)
    assert first["E_TP"] == 0 and first["E_FP"] == 0


def test_roc_errors():
    with pytest.raises(ValueError, match="both classes"):
        evaluation.roc_curve([1.0, 2.0], [0, 0], positive=1)
    with pytest.raises(ValueError):
        evaluation.roc_curve([1.0, np.nan], [0, 1], positive=1)


def make_report(rng, provenance):
    curves = {}
    for det in ("d1", "d2"):
        for kind in ("k1", "k2", "k3"):
            curves[(det, kind)] = evaluation.roc_curve(rng.normal(size=50),
                                                       rng.integers(0, 2, 50), positive=1)
    return EvalReport(curves, provenance)


def test_emit_and_reload(tmp_path, rng):
    report = make_report(rng, {"seed": 1})
    evaluation.emit_report(report, tmp_path)
    assert len(list((tmp_path / "roc").glob("*.csv"))) == 6
    summary = evaluation.load_summary(tmp_path / "summary.csv")
    assert len(summary) == 6
    for (det, kind), curve in report.curves.items():
        th, fp, tp = evaluation.load_curve(tmp_path / "roc" / f"{det}__{kind}.csv")
        np.testing.assert_array_equal(th, curve.thresholds)
        np.testing.assert_array_equal(fp, curve.fpr)
        np.testing.assert_array_equal(tp, curve.tpr)
        row = next(r for r in summary if r["detector"] == det and r["anomaly_type"] == kind)
        assert float(row["auc"]) == curve.auc


def test_config_hash_sensitivity():
    base = {"seed": 0, "knn_k": 5, "nested": {"gamma": 0.1}}
    h = evaluation.config_hash(base)
    assert evaluation.config_hash(dict(reversed(list(base.items())))) == h
    assert evaluation.config_hash({**base, "seed": 1}) != h
    assert evaluation.config_hash({**base, "nested": {"gamma": 0.2}}) != h
