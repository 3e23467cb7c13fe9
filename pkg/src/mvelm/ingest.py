"""Metric ingestion: Prometheus text parsing, windowing into multi-view
samples, z-score normalization, chunking and dataset files (JSONL/CSV)."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import queue
import re
import threading
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .schema import ATTRIBUTE_INDEX, ATTRIBUTE_VIEW, ATTRIBUTES, VIEW_ATTRIBUTES, VIEW_NAMES, VIEW_SLICES

log = logging.getLogger(__name__)

DEFAULT_PERIOD = 10.0
CSV_HEADER = ("timestamp", "host", "label") + ATTRIBUTES


class SchemaError(ValueError):
    """Dataset columns or views do not match the metric schema."""


# --------------------------------------------------------------------------
# samples


@dataclass(frozen=True)
class MultiViewSample:
    timestamp: float
    host: str
    views: dict
    label: str | None = None

    def vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.views[v], dtype=np.float64) for v in VIEW_NAMES])


@dataclass
class Dataset:
    """Columnar block of samples; ``values`` holds the 44 attributes in schema order."""

    timestamps: np.ndarray
    hosts: list
    values: np.ndarray
    labels: list

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64).ravel()
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1, len(ATTRIBUTES))
        n = self.timestamps.shape[0]
        if not (len(self.hosts) == len(self.labels) == self.values.shape[0] == n):
            raise SchemaError("dataset columns have different lengths")

    def __len__(self):
        return self.timestamps.shape[0]

    def __getitem__(self, idx) -> "Dataset":
        if isinstance(idx, slice):
            return Dataset(self.timestamps[idx], self.hosts[idx], self.values[idx], self.labels[idx])
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return Dataset(self.timestamps[idx], [self.hosts[i] for i in idx], self.values[idx],
                       [self.labels[i] for i in idx])

    def view(self, name: str) -> np.ndarray:
        return self.values[:, VIEW_SLICES[name]]

    def views(self, names: Sequence[str] = VIEW_NAMES) -> list[np.ndarray]:
        return [self.view(n) for n in names]

    def sample(self, i: int) -> MultiViewSample:
        views = {v: self.values[i, VIEW_SLICES[v]].copy() for v in VIEW_NAMES}
        return MultiViewSample(float(self.timestamps[i]), self.hosts[i], views, self.labels[i])

    def __iter__(self) -> Iterator[MultiViewSample]:
        return (self.sample(i) for i in range(len(self)))

    @property
    def is_labeled(self) -> bool:
        return all(lab is not None for lab in self.labels)

    @classmethod
    def from_samples(cls, samples: Iterable[MultiViewSample]) -> "Dataset":
        samples = list(samples)
        for s in samples:
            for v in VIEW_NAMES:
                if len(s.views[v]) != len(VIEW_ATTRIBUTES[v]):
                    raise SchemaError(f"view {v!r} has {len(s.views[v])} values, expected 11")
        values = np.array([s.vector() for s in samples]).reshape(-1, len(ATTRIBUTES))
        return cls(np.array([s.timestamp for s in samples]), [s.host for s in samples], values,
                   [s.label for s in samples])

    @classmethod
    def concat(cls, parts: Sequence["Dataset"]) -> "Dataset":
        return cls(np.concatenate([p.timestamps for p in parts]),
                   [h for p in parts for h in p.hosts],
                   np.vstack([p.values for p in parts]),
                   [lab for p in parts for lab in p.labels])


def split_offline(data: Dataset, fraction: float = 0.2) -> tuple[Dataset, Dataset]:
    """First ``fraction`` of the stream for offline training, the rest online."""
    if not 0 < fraction < 1:
        raise ValueError("offline fraction must be in (0, 1)")
    cut = int(round(len(data) * fraction))
    return data[:cut], data[cut:]


def fraction_range(data: Dataset, start: float, stop: float) -> Dataset:
    if not 0 <= start < stop <= 1:
        raise ValueError(f"bad fraction range [{start}, {stop}]")
    n = len(data)
    return data[int(round(n * start)):int(round(n * stop))]


# --------------------------------------------------------------------------
# dataset files


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _json_str(s) -> str:
    return "null" if s is None else json.dumps(s)


def write_dataset(path, data: Dataset) -> None:
    path = Path(path)
    fmt = _format_of(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if fmt == "jsonl":
            for i in range(len(data)):
                row = data.values[i]
                views = ", ".join(
                    f'"{v}": [' + ", ".join(_fmt(x) for x in row[VIEW_SLICES[v]]) + "]"
                    for v in VIEW_NAMES
                )
                fh.write(
                    f'{{"timestamp": {_fmt(data.timestamps[i])}, "host": {_json_str(data.hosts[i])}, '
                    f'"label": {_json_str(data.labels[i])}, "views": {{{views}}}}}\n'
                )
        else:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for i in range(len(data)):
                writer.writerow([_fmt(data.timestamps[i]), data.hosts[i], data.labels[i] or ""]
                                + [_fmt(x) for x in data.values[i]])


def read_dataset(path) -> Dataset:
    path = Path(path)
    if _format_of(path) == "jsonl":
        return _read_jsonl(path)
    return _read_csv(path)


def _format_of(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix in (".jsonl", ".json", ".ndjson"):
        return "jsonl"
    if suffix == ".csv":
        return "csv"
    raise SchemaError(f"unknown dataset format for {path.name!r}; use .jsonl or .csv")


def _read_jsonl(path: Path) -> Dataset:
    ts, hosts, labels, rows = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            views = obj.get("views", {})
            missing = [v for v in VIEW_NAMES if v not in views]
            extra = [v for v in views if v not in VIEW_NAMES]
            if missing or extra:
                raise SchemaError(f"line {lineno}: missing views {missing}, unexpected views {extra}")
            row = []
            for v in VIEW_NAMES:
                if len(views[v]) != 11:
                    raise SchemaError(f"line {lineno}: view {v!r} has {len(views[v])} values, expected 11")
                row.extend(views[v])
            ts.append(obj["timestamp"])
            hosts.append(obj["host"])
            labels.append(obj.get("label"))
            rows.append(row)
    return Dataset(np.array(ts, dtype=np.float64), hosts, np.array(rows, dtype=np.float64), labels)


def _read_csv(path: Path) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path.name}: empty CSV")
        missing = [c for c in CSV_HEADER if c not in header]
        extra = [c for c in header if c not in CSV_HEADER]
        if missing or extra:
            raise SchemaError(f"{path.name}: missing columns {missing}, unexpected columns {extra}")
        pos = {c: header.index(c) for c in CSV_HEADER}
        attr_pos = [pos[a] for a in ATTRIBUTES]
        ts, hosts, labels, rows = [], [], [], []
        for rec in reader:
            if not rec:
                continue
            ts.append(float(rec[pos["timestamp"]]))
            hosts.append(rec[pos["host"]])
            labels.append(rec[pos["label"]] or None)
            rows.append([float(rec[p]) for p in attr_pos])
    return Dataset(np.array(ts), hosts, np.array(rows, dtype=np.float64), labels)


# --------------------------------------------------------------------------
# Prometheus text exposition


class Record(NamedTuple):
    timestamp: float | None
    host: str
    attribute: str
    value: float


@dataclass
class ParseReport:
    total_lines: int = 0
    comment_lines: int = 0
    n_records: int = 0
    unmapped: Counter = field(default_factory=Counter)
    malformed: list = field(default_factory=list)

    @property
    def n_unmapped(self) -> int:
        return sum(self.unmapped.values())

    def balanced(self) -> bool:
        return (self.n_records + self.n_unmapped + len(self.malformed) + self.comment_lines
                == self.total_lines)


_SAMPLE_RE = re.compile(
    r"^(?P<name>[a-zA-Z_:][a-zA-Z0-9_:]*)"
    r"(?:\{(?P<labels>[^{}]*)\})?"
    r"[ \t]+(?P<value>\S+)"
    r"(?:[ \t]+(?P<ts>-?\d+))?[ \t]*$"
)
_LABEL_RE = re.compile(r'\s*([a-zA-Z_][a-zA-Z0-9_]*)\s*=\s*"((?:[^"\\]|\\.)*)"\s*(?:,|$)')


def _parse_labels(text: str) -> dict | None:
    labels = {}
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _LABEL_RE.match(text, pos)
        if not m:
            return None
        labels[m.group(1)] = bytes(m.group(2), "utf-8").decode("unicode_escape")
        pos = m.end()
    return labels


def default_mapping() -> dict:
    return {a: a for a in ATTRIBUTES}


def load_mapping(path) -> dict:
    """Read ``metric_name = view.attribute`` lines (``#`` comments allowed)."""
    mapping = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SchemaError(f"{path}:{lineno}: expected 'metric = view.attribute'")
            key, target = (s.strip() for s in line.split("=", 1))
            view, _, attr = target.partition(".")
            if attr not in ATTRIBUTE_VIEW or ATTRIBUTE_VIEW[attr] != view:
                raise SchemaError(f"{path}:{lineno}: {target!r} is not a schema view.attribute")
            mapping[key] = attr
    return mapping


def parse_prometheus(stream, mapping: dict | None = None, host_label: str = "host",
                     default_host: str = "") -> tuple[list[Record], ParseReport]:
    """Parse Prometheus text exposition lines into attribute records.

    ``stream`` may be a path, bytes, str or a text/binary file object.
    Timestamps are converted from milliseconds to seconds; a missing
    timestamp yields ``None``. Unmapped metrics and malformed lines are
    accounted in the report and never abort parsing.
    """
    mapping = default_mapping() if mapping is None else mapping
    lines = _lines_of(stream)
    report = ParseReport()
    records = []
    for lineno, raw in enumerate(lines, 1):
        report.total_lines += 1
        line = raw.rstrip("\r\n")
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            report.comment_lines += 1
            continue
        m = _SAMPLE_RE.match(stripped)
        if not m:
            report.malformed.append((lineno, "unparseable sample line"))
            continue
        labels = _parse_labels(m.group("labels") or "")
        if labels is None:
            report.malformed.append((lineno, "bad label set"))
            continue
        try:
            value = float(m.group("value"))
        except ValueError:
            report.malformed.append((lineno, f"bad value {m.group('value')!r}"))
            continue
        if not math.isfinite(value):
            report.malformed.append((lineno, "non-finite value"))
            continue
        name = m.group("name")
        if name not in mapping:
            report.unmapped[name] += 1
            continue
        ts = m.group("ts")
        records.append(Record(None if ts is None else int(ts) / 1000.0,
                              labels.get(host_label, labels.get("instance", default_host)),
                              mapping[name], value))
        report.n_records += 1
    return records, report


def _lines_of(stream):
    if isinstance(stream, Path):
        return stream.read_text(encoding="utf-8").splitlines()
    if isinstance(stream, str) and "\n" not in stream:
        try:
            if Path(stream).is_file():
                return Path(stream).read_text(encoding="utf-8").splitlines()
        except OSError:
            pass
    if isinstance(stream, bytes):
        return stream.decode("utf-8").splitlines()
    if isinstance(stream, str):
        return stream.splitlines()
    data = stream.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data.splitlines()


def to_prometheus(data: Dataset) -> str:
    """Render a dataset as exposition lines (one line per attribute per sample)."""
    out = io.StringIO()
    for i in range(len(data)):
        ts_ms = int(round(data.timestamps[i] * 1000))
        host = data.hosts[i].replace("\\", "\\\\").replace('"', '\\"')
        for j, attr in enumerate(ATTRIBUTES):
            out.write(f'{attr}{{host="{host}"}} {_fmt(data.values[i, j])} {ts_ms}\n')
    return out.getvalue()


# --------------------------------------------------------------------------
# windowing


@dataclass
class WindowResult:
    samples: Dataset
    n_incomplete: int
    incomplete: list


def window_features(records: Iterable[Record], window: float = DEFAULT_PERIOD,
                    agg: str = "last") -> WindowResult:
    """Group records into one sample per (host, window).

    Each attribute takes the last value seen in its window (or the mean
    with ``agg="mean"``). Windows missing any attribute are left out and
    reported as incomplete.
    """
    if agg not in ("last", "mean"):
        raise ValueError("agg must be 'last' or 'mean'")
    buckets: dict = {}
    for rec in records:
        if rec.timestamp is None:
            continue
        key = (math.floor(rec.timestamp / window), rec.host)
        slot = buckets.setdefault(key, {})
        j = ATTRIBUTE_INDEX[rec.attribute]
        if agg == "last":
            prev = slot.get(j)
            if prev is None or rec.timestamp >= prev[0]:
                slot[j] = (rec.timestamp, rec.value)
        else:
            s = slot.setdefault(j, [0.0, 0])
            s[0] += rec.value
            s[1] += 1
    ts, hosts, rows, incomplete = [], [], [], []
    for (widx, host) in sorted(buckets):
        slot = buckets[(widx, host)]
        if len(slot) < len(ATTRIBUTES):
            incomplete.append((widx * window, host, len(slot)))
            continue
        if agg == "last":
            row = [slot[j][1] for j in range(len(ATTRIBUTES))]
        else:
            row = [slot[j][0] / slot[j][1] for j in range(len(ATTRIBUTES))]
        ts.append(widx * window)
        hosts.append(host)
        rows.append(row)
    samples = Dataset(np.array(ts, dtype=np.float64), hosts,
                      np.array(rows, dtype=np.float64).reshape(-1, len(ATTRIBUTES)), [None] * len(ts))
    if incomplete:
        log.info("excluded %d incomplete windows", len(incomplete))
    return WindowResult(samples, len(incomplete), incomplete)


# --------------------------------------------------------------------------
# normalization


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Normalizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_normalizer(samples) -> Normalizer:
    values = samples.values if isinstance(samples, Dataset) else np.asarray(samples, dtype=np.float64)
    if values.shape[0] == 0:
        raise ValueError("cannot fit a normalizer on an empty sample set")
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    flat = ~(std > 1e-12)
    if flat.any():
        names = [ATTRIBUTES[j] for j in np.flatnonzero(flat)] if values.shape[1] == len(ATTRIBUTES) else []
        warnings.warn(f"constant attributes get unit scale: {names or np.flatnonzero(flat).tolist()}",
                      stacklevel=2)
        std = np.where(flat, 1.0, std)
    return Normalizer(mean, std)


def apply_normalizer(norm: Normalizer, samples):
    if isinstance(samples, Dataset):
        return Dataset(samples.timestamps, samples.hosts, (samples.values - norm.mean) / norm.std,
                       samples.labels)
    return (np.asarray(samples, dtype=np.float64) - norm.mean) / norm.std


# --------------------------------------------------------------------------
# chunking


@dataclass(frozen=True)
class ChunkConfig:
    size: int = 1
    period: float = DEFAULT_PERIOD

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("chunk size must be >= 1")


class Chunk(NamedTuple):
    start: int
    data: object
    partial: bool


def chunk_stream(samples, cfg: ChunkConfig) -> Iterator[Chunk]:
    """Consecutive chunks of ``cfg.size``; a short final chunk is flagged partial."""
    n = len(samples)
    for start in range(0, n, cfg.size):
        stop = min(start + cfg.size, n)
        yield Chunk(start, samples[start:stop], stop - start < cfg.size)


def bounded_feed(chunks: Iterable, maxsize: int = 4) -> Iterator:
    """Run ``chunks`` in a producer thread behind a bounded FIFO.

    The producer blocks while the queue is full; exceptions raised by the
    producer are re-raised in the consumer.
    """
    q: queue.Queue = queue.Queue(maxsize=maxsize)
    done = object()
    stop = threading.Event()

    def produce():
        try:
            for item in chunks:
                while not stop.is_set():
                    try:
                        q.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if stop.is_set():
                    return
            q.put(done)
        except BaseException as exc:  # handed to the consumer
            q.put(exc)

    worker = threading.Thread(target=produce, daemon=True)
    worker.start()
    try:
        while True:
            item = q.get()
            if item is done:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        worker.join(timeout=1.0)
