import numpy as np
import pytest

from mvelm import fusion, ingest, pipeline
from mvelm.elm import encode_labels
from mvelm.ingest import Dataset
from mvelm.pipeline import DataError


@pytest.fixture(scope="module")
def trained(small_fleet):
    _, data, _ = small_fleet
    offline, online = ingest.split_offline(data, 0.2)
    ckpt = pipeline.train(offline, n_hidden=30, seed=1)
    return ckpt, offline, online


def test_train_checkpoint(trained):
    ckpt, offline, _ = trained
    assert ckpt.k.sum() == pytest.approx(1.0, abs=1e-12)
    assert ckpt.n_seen == len(offline)
    assert np.all(np.diff(ckpt.objective_trace) <= 1e-12)
    again = pipeline.train(offline, n_hidden=30, seed=1)
    np.testing.assert_array_equal(again.beta, ckpt.beta)


def test_train_single_view(trained):
    _, offline, _ = trained
    ckpt = pipeline.train(offline, views=["cpu"], n_hidden=30, seed=1)
    np.testing.assert_array_equal(ckpt.k, [1.0])
    assert ckpt.view_names == ["cpu"]


def test_train_rejects_bad_input(trained):
    _, offline, _ = trained
    with pytest.raises(DataError):
        pipeline.train(offline, views=["gpu"])
    unlabeled = Dataset(offline.timestamps, offline.hosts, offline.values, [None] * len(offline))
    with pytest.raises(DataError):
        pipeline.train(unlabeled)


def test_detect_is_prequential(trained):
    ckpt, _, online = trained
    preds, new = pipeline.detect(ckpt, online, chunk_size=50)
    np.testing.assert_array_equal(preds.scores[:50], pipeline.score(ckpt, online[:50]))
    state = fusion.online_fuse_update(ckpt.online_state(), pipeline.hidden_views(ckpt, online[:50]),
                                      encode_labels(online[:50].labels, ckpt.classes))
    np.testing.assert_allclose(preds.scores[50:100],
                               pipeline.score(ckpt, online[50:100], beta=state.beta), rtol=1e-12)
    assert new.n_seen == ckpt.n_seen + len(online)
    assert new.revision == ckpt.revision + 1


def test_detect_no_update_chunk_invariant(trained):
    ckpt, _, online = trained
    outs = [pipeline.detect(ckpt, online, chunk_size=c, update=False) for c in (1, 10, 100)]
    for preds, new in outs:
        assert new is ckpt
        np.testing.assert_allclose(preds.scores, outs[0][0].scores, rtol=1e-13, atol=1e-15)


def test_detect_split_protocol(trained):
    ckpt, _, online = trained
    preds, new = pipeline.detect(ckpt, online, chunk_size=100, protocol="split")
    half = len(online) // 2
    assert len(preds) == len(online) - half
    assert preds.ids[0] == half
    assert new.n_seen == ckpt.n_seen + half


def test_detect_skips_unlabeled(trained):
    ckpt, _, online = trained
    blind = Dataset(online.timestamps, online.hosts, online.values, [None] * len(online))
    preds, new = pipeline.detect(ckpt, blind, chunk_size=100)
    assert new is ckpt and len(preds) == len(online)


def test_detect_with_bounded_feed(trained):
    ckpt, _, online = trained
    a, _ = pipeline.detect(ckpt, online, chunk_size=64)
    b, _ = pipeline.detect(ckpt, online, chunk_size=64, feed=ingest.bounded_feed)
    np.testing.assert_array_equal(a.scores, b.scores)


def test_retrain_uniform_reproduces_beta(trained):
    ckpt, offline, _ = trained
    new, weights = pipeline.retrain(ckpt, offline, uniform=True)
    np.testing.assert_allclose(new.beta, ckpt.beta, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(new.g, ckpt.g, rtol=1e-8, atol=1e-12)
    assert np.all(weights.mean_one == 1.0)


def test_retrain_margin_weights(trained):
    ckpt, offline, _ = trained
    new, weights = pipeline.retrain(ckpt, offline, margin_floor=1e-3)
    assert new.revision == ckpt.revision + 1
    assert weights.normalized.sum() == pytest.approx(1.0, abs=1e-12)
    assert not np.allclose(new.beta, ckpt.beta)


def test_predictions_roundtrip(tmp_path, trained):
    ckpt, _, online = trained
    preds, _ = pipeline.detect(ckpt, online[:40], update=False, id_offset=7)
    pipeline.write_predictions(tmp_path / "p.csv", preds)
    back = pipeline.read_predictions(tmp_path / "p.csv")
    np.testing.assert_array_equal(back.scores, preds.scores)
    np.testing.assert_array_equal(back.ids, np.arange(40) + 7)
    assert back.classes == preds.classes and back.predicted == preds.predicted
    (tmp_path / "e.csv").write_text(",".join(pipeline.PRED_FIXED) + "\n")
    with pytest.raises(DataError):
        pipeline.read_predictions(tmp_path / "e.csv")


def test_evaluate_report(trained, small_fleet):
    ckpt, _, _ = trained
    _, data, _ = small_fleet
    report = pipeline.evaluate(ckpt, data, 0.2, pipeline.BaselineConfig(kpca_components=5))
    kinds = {k for _, k in report.curves}
    assert len(report.curves) == 4 * len(kinds)
    assert set(report.provenance["missing_anomaly_types"]).isdisjoint(kinds)
    for curve in report.curves.values():
        assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
