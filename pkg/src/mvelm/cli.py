"""Command-line entry point: ``mvelm <command> [options]``.

Every command writes a JSON manifest next to its primary output
(``<output>.manifest.json``) holding the resolved configuration and the
sha256 of every input and output file. ``mvelm replay MANIFEST`` reruns the
command into a scratch directory and checks the outputs hash-identically.

Exit codes: 0 success, 1 replay mismatch, 2 usage, 3 data/schema error,
4 numerical failure, 5 file system error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, checkpoint, ingest, pipeline, ranking, simulator
from .checkpoint import CheckpointError
from .elm import Activation
from .evaluation import emit_report
from .ingest import SchemaError
from .numerics import NumericsError
from .schema import VIEW_NAMES

log = logging.getLogger("mvelm")

# output config keys per command; the first one names the manifest
OUTPUT_KEYS = {
    "simulate": ("out", "prom_out", "script_out"),
    "ingest": ("out",),
    "train": ("out",),
    "detect": ("predictions", "out_checkpoint"),
    "rank": ("out_ranking", "out_deciles"),
    "retrain": ("out",),
    "evaluate": ("out_dir",),
}
INPUT_KEYS = ("dataset", "checkpoint", "predictions_in", "script", "input", "mapping")


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _hash_output(path: Path) -> dict:
    if path.is_dir():
        return {str(p.relative_to(path)): _sha(p) for p in sorted(path.rglob("*")) if p.is_file()}
    return {path.name: _sha(path)}


def _views(text: str) -> list[str]:
    views = [v.strip() for v in text.split(",") if v.strip()]
    bad = [v for v in views if v not in VIEW_NAMES]
    if bad or not views:
        raise pipeline.DataError(f"unknown views {bad}; choose from {list(VIEW_NAMES)}")
    return views


# --------------------------------------------------------------------------
# commands; each takes the resolved config dict and returns nothing


def cmd_simulate(cfg: dict) -> None:
    fleet = simulator.FleetConfig(n_nodes=cfg["n_nodes"], vms_per_node=cfg["vms_per_node"],
                                  period=cfg["period"], duration=cfg["duration"], seed=cfg["seed"],
                                  start_time=cfg["start_time"])
    script = simulator.AnomalyScript.read(cfg["script"]) if cfg.get("script") else None
    data, script = simulator.simulate(fleet, fraction=cfg["anomaly_fraction"], script=script)
    ingest.write_dataset(cfg["out"], data)
    if cfg.get("prom_out"):
        Path(cfg["prom_out"]).write_text(ingest.to_prometheus(data), encoding="utf-8")
    if cfg.get("script_out"):
        script.write(cfg["script_out"])
    log.info("wrote %d samples (%d anomalous) to %s", len(data),
             sum(lab != "normal" for lab in data.labels), cfg["out"])


def cmd_ingest(cfg: dict) -> None:
    mapping = ingest.load_mapping(cfg["mapping"]) if cfg.get("mapping") else None
    records, report = ingest.parse_prometheus(Path(cfg["input"]), mapping)
    result = ingest.window_features(records, window=cfg["window"], agg=cfg["agg"])
    ingest.write_dataset(cfg["out"], result.samples)
    for lineno, reason in report.malformed[:20]:
        log.warning("line %d: %s", lineno, reason)
    log.info("%d records, %d unmapped, %d malformed, %d samples, %d incomplete windows",
             report.n_records, report.n_unmapped, len(report.malformed), len(result.samples),
             result.n_incomplete)


def cmd_train(cfg: dict) -> None:
    data = ingest.read_dataset(cfg["dataset"])
    offline, _ = ingest.split_offline(data, cfg["offline_fraction"])
    act = Activation(cfg["activation"], cfg.get("rbf_gamma"))
    ckpt = pipeline.train(offline, views=_views(cfg["views"]), n_hidden=cfg["n_hidden"],
                          c_reg=cfg["c_reg"], r=cfg["r"], tol=cfg["tol"], max_iter=cfg["max_iter"],
                          activation=act, seed=cfg["seed"])
    checkpoint.save(cfg["out"], ckpt)
    log.info("trained on %d samples: k=%s converged=%s after %d iterations", len(offline),
             np.round(ckpt.k, 4).tolist(), ckpt.converged, ckpt.n_iter)


def cmd_detect(cfg: dict) -> None:
    if not cfg["no_update"] and not cfg.get("out_checkpoint"):
        raise pipeline.DataError("--out-checkpoint is required unless --no-update is given")
    ckpt = checkpoint.load(cfg["checkpoint"])
    data = ingest.read_dataset(cfg["dataset"])
    start = cfg["start_fraction"]
    part = ingest.fraction_range(data, start, cfg["stop_fraction"])
    offset = int(round(len(data) * start))
    preds, new = pipeline.detect(ckpt, part, chunk_size=cfg["chunk_size"],
                                 update=not cfg["no_update"], protocol=cfg["protocol"],
                                 id_offset=offset, feed=ingest.bounded_feed)
    pipeline.write_predictions(cfg["predictions"], preds)
    if not cfg["no_update"]:
        new = replace(new, parent_sha256=_sha(Path(cfg["checkpoint"])))
        checkpoint.save(cfg["out_checkpoint"], new)
    n_anom = sum(p != "normal" for p in preds.predicted)
    log.info("scored %d samples, %d predicted anomalous", len(preds), n_anom)


def cmd_rank(cfg: dict) -> None:
    preds = pipeline.read_predictions(cfg["predictions_in"])
    anomaly_classes = [c for c in preds.classes if c != "normal"]
    predicted = preds.predicted
    margins = preds.margins
    ranked = ranking.rank_anomalies(list(preds.ids), predicted, margins, anomaly_classes)
    pos = {int(sid): i for i, sid in enumerate(preds.ids)}
    with open(cfg["out_ranking"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "timestamp", "host", "predicted_class", "margin", "rank"])
        for rank_no, (sid, cls, margin) in enumerate(ranked.entries, 1):
            i = pos[int(sid)]
            w.writerow([int(sid), format(float(preds.timestamps[i]), ".17g"), preds.hosts[i], cls,
                        format(margin, ".17g"), rank_no])
    stats = ranking.decile_histogram(margins) if len(margins) >= 10 else None
    with open(cfg["out_deciles"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_low", "bin_high", "count"])
        if stats is None:
            w.writerow([format(float(margins.min()), ".17g"), format(float(margins.max()), ".17g"),
                        len(margins)])
        else:
            for lo, hi, c in zip(stats.edges[:-1], stats.edges[1:], stats.counts):
                w.writerow([format(float(lo), ".17g"), format(float(hi), ".17g"), int(c)])
    log.info("ranked %d predicted anomalies out of %d samples", len(ranked), len(preds))


def cmd_retrain(cfg: dict) -> None:
    ckpt = checkpoint.load(cfg["checkpoint"])
    data = ingest.read_dataset(cfg["dataset"])
    part = ingest.fraction_range(data, cfg["start_fraction"], cfg["stop_fraction"])
    new, weights = pipeline.retrain(ckpt, part, uniform=cfg["weights"] == "uniform",
                                    anomalies_only=cfg["anomalies_only"],
                                    margin_floor=cfg.get("margin_floor"))
    new = replace(new, parent_sha256=_sha(Path(cfg["checkpoint"])))
    checkpoint.save(cfg["out"], new)
    log.info("retrained on %d samples (weights %s..%s)", len(part),
             float(weights.mean_one.min()), float(weights.mean_one.max()))


def cmd_evaluate(cfg: dict) -> None:
    ckpt = checkpoint.load(cfg["checkpoint"])
    data = ingest.read_dataset(cfg["dataset"])
    bcfg = pipeline.BaselineConfig(knn_k=cfg["knn_k"], pca_components=cfg["pca_components"],
                                   kpca_gamma=cfg["kpca_gamma"],
                                   kpca_components=cfg["kpca_components"])
    prov = {"dataset_sha256": _sha(Path(cfg["dataset"])),
            "checkpoint_sha256": _sha(Path(cfg["checkpoint"]))}
    report = pipeline.evaluate(ckpt, data, cfg["offline_fraction"], bcfg, prov)
    emit_report(report, cfg["out_dir"])
    for (det, kind), auc in sorted(report.auc_table().items()):
        log.info("%-14s %-16s AUC %.4f", det, kind, auc)


COMMANDS = {
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "detect": cmd_detect,
    "rank": cmd_rank,
    "retrain": cmd_retrain,
    "evaluate": cmd_evaluate,
}


def run_command(name: str, cfg: dict, write_manifest: bool = True) -> dict:
    """Execute a command from a resolved config and return its manifest."""
    COMMANDS[name](cfg)
    outputs = {}
    for key in OUTPUT_KEYS[name]:
        if cfg.get(key) and Path(cfg[key]).exists():
            outputs[key] = _hash_output(Path(cfg[key]))
    inputs = {key: _sha(Path(cfg[key])) for key in INPUT_KEYS if cfg.get(key)}
    manifest = {"tool": "mvelm", "version": __version__, "command": name, "config": cfg,
                "inputs": inputs, "outputs": outputs}
    if write_manifest:
        primary = next(cfg[k] for k in OUTPUT_KEYS[name] if cfg.get(k))
        Path(str(primary).rstrip("/") + ".manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def replay(manifest_path, out_dir=None) -> tuple[bool, dict]:
    """Rerun a manifest's command with outputs redirected to ``out_dir``.

    Returns (all outputs hash-identical, per-key comparison).
    """
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    name = manifest["command"]
    cfg = dict(manifest["config"])
    for key, sha in manifest.get("inputs", {}).items():
        if _sha(Path(cfg[key])) != sha:
            raise pipeline.DataError(f"input {key} ({cfg[key]}) changed since the manifest was written")
    scratch = Path(out_dir) if out_dir else Path(tempfile.mkdtemp(prefix="mvelm-replay-"))
    scratch.mkdir(parents=True, exist_ok=True)
    for key in OUTPUT_KEYS[name]:
        if cfg.get(key):
            cfg[key] = str(scratch / Path(cfg[key]).name)
    fresh = run_command(name, cfg, write_manifest=False)
    comparison = {key: fresh["outputs"].get(key) == hashes
                  for key, hashes in manifest["outputs"].items()}
    return all(comparison.values()) and bool(comparison), comparison


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvelm", description="Multi-view ELM anomaly detection toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a labeled multi-view metric dataset")
    s.add_argument("--out", required=True, help="dataset path (.jsonl or .csv)")
    s.add_argument("--prom-out", help="also write Prometheus text exposition")
    s.add_argument("--script", help="anomaly script to apply instead of a generated one")
    s.add_argument("--script-out", help="write the applied anomaly script")
    s.add_argument("--n-nodes", type=int, default=5)
    s.add_argument("--vms-per-node", type=int, default=3)
    s.add_argument("--period", type=float, default=10.0)
    s.add_argument("--duration", type=float, default=3 * 3600.0)
    s.add_argument("--start-time", type=float, default=simulator.DEFAULT_START)
    s.add_argument("--anomaly-fraction", type=float, default=simulator.DEFAULT_ANOMALY_FRACTION)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("ingest", help="window a Prometheus text dump into a dataset")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mapping", help="metric_name = view.attribute lines")
    s.add_argument("--window", type=float, default=10.0)
    s.add_argument("--agg", choices=("last", "mean"), default="last")

    s = sub.add_parser("train", help="offline fusion training on the first part of a dataset")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--views", default=",".join(VIEW_NAMES))
    s.add_argument("--n-hidden", type=int, default=100)
    s.add_argument("--c-reg", type=float, default=1.0)
    s.add_argument("--r", type=float, default=2.0, help="fusion power factor (>= 2)")
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--activation", choices=("sigmoid", "rbf"), default="sigmoid")
    s.add_argument("--rbf-gamma", type=float)
    s.add_argument("--offline-fraction", type=float, default=0.2)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("detect", help="online detection over a dataset range")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--predictions", required=True, help="predictions CSV to write")
    s.add_argument("--out-checkpoint", help="updated checkpoint (new file)")
    s.add_argument("--chunk-size", type=int, default=100)
    s.add_argument("--start-fraction", type=float, default=0.2)
    s.add_argument("--stop-fraction", type=float, default=1.0)
    s.add_argument("--protocol", choices=("prequential", "split"), default="prequential")
    s.add_argument("--no-update", action="store_true", help="inference only")

    s = sub.add_parser("rank", help="rank predicted anomalies and histogram the margins")
    s.add_argument("--predictions", dest="predictions_in", required=True)
    s.add_argument("--out-ranking", required=True)
    s.add_argument("--out-deciles", required=True)

    s = sub.add_parser("retrain", help="margin-weighted retrain of a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--start-fraction", type=float, default=0.0)
    s.add_argument("--stop-fraction", type=float, default=0.2)
    s.add_argument("--weights", choices=("margin", "uniform"), default="margin")
    s.add_argument("--anomalies-only", action="store_true")
    s.add_argument("--margin-floor", type=float)

    s = sub.add_parser("evaluate", help="ROC comparison against the KNN baselines")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--offline-fraction", type=float, default=0.2)
    s.add_argument("--knn-k", type=int, default=5)
    s.add_argument("--pca-components", type=int, default=10)
    s.add_argument("--kpca-gamma", type=float, default=1.0 / 44.0)
    s.add_argument("--kpca-components", type=int, default=10)

    s = sub.add_parser("replay", help="rerun a manifest and verify identical outputs")
    s.add_argument("manifest")
    s.add_argument("--out-dir")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = {k: v for k, v in vars(args).items() if k not in ("command", "verbose")}
    try:
        if args.command == "replay":
            ok, comparison = replay(args.manifest, args.out_dir)
            for key, same in comparison.items():
                print(f"{key}: {'identical' if same else 'DIFFERS'}")
            return 0 if ok else 1
        run_command(args.command, cfg)
    except (pipeline.DataError, SchemaError, CheckpointError, KeyError) as exc:
        print(f"error[data]: {exc}", file=sys.stderr)
        return 3
    except NumericsError as exc:
        print(f"error[numerical]: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 5
    except ValueError as exc:
        print(f"error[data]: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
