"""Synthetic multi-view metric streams for a small virtualized fleet.

Each attribute of each host follows a stationary AR(1) process

    x_t = mu + phi * (x_{t-1} - mu) + sigma * sqrt(1 - phi^2) * eps_t

so ``sigma`` is the stationary standard deviation. Anomaly intervals add a
step shift (in units of the attribute's sigma) to the attributes of the
anomaly's primary view, plus a mild shift on one coupled view.

Nominal values (mu, sigma) and shift profiles are listed in
``ATTRIBUTE_PROFILE`` and ``SHIFT_PROFILES``; none of them are measured
values, they only set the difficulty of the detection task.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import Dataset
from .numerics import SeededRng
from .schema import ANOMALY_TYPES, ATTRIBUTE_INDEX, ATTRIBUTES, NORMAL

PHI = 0.8
DEFAULT_START = 1_700_000_000.0
DEFAULT_ANOMALY_FRACTION = 0.08

# name: (mu, sigma, kind) with kind in {"util", "nonneg", "free"}
ATTRIBUTE_PROFILE = {
    "node_cpu_idle": (0.85, 0.04, "util"),
    "node_cpu_iowait": (0.02, 0.008, "util"),
    "node_cpu_softing": (0.01, 0.004, "util"),
    "node_cpu_system": (0.03, 0.01, "util"),
    "node_cpu_user": (0.10, 0.03, "util"),
    "node_cpu_nice": (0.005, 0.002, "util"),
    "node_cpu_irq": (0.004, 0.0015, "util"),
    "node_cpu_cs": (2500.0, 400.0, "nonneg"),
    "node_cpu_running": (3.0, 1.0, "nonneg"),
    "node_vcpu_run": (0.40, 0.08, "util"),
    "node_cpu_runrate": (0.15, 0.04, "util"),
    "node_memory": (2.2e9, 1.5e8, "nonneg"),
    "node_memory_Buffers": (1.2e8, 1.5e7, "nonneg"),
    "node_memory_Cached": (9.0e8, 8.0e7, "nonneg"),
    "node_memory_Swapd": (5.0e7, 8.0e6, "nonneg"),
    "node_memory_MemTotal": (4.0e9, 0.0, "nonneg"),
    "node_memory_Memfree": (1.3e9, 1.2e8, "nonneg"),
    "node_memory_Slab": (1.5e8, 1.0e7, "nonneg"),
    "node_memory_Sheme": (4.0e7, 5.0e6, "nonneg"),
    "node_memory_VmallocTotal": (3.4e13, 0.0, "nonneg"),
    "node_memory_VmallocRate": (0.35, 0.04, "util"),
    "node_memory_VmallocMax": (6.0e8, 4.0e7, "nonneg"),
    "node_disk_await": (4.0, 1.0, "nonneg"),
    "node_disk_svc_time": (1.5, 0.4, "nonneg"),
    "node_disk_read_time_ms": (30.0, 8.0, "nonneg"),
    "node_disk_write_time_ms": (45.0, 10.0, "nonneg"),
    "node_disk_sectors_written": (800.0, 200.0, "nonneg"),
    "node_disk_sectore_written": (1200.0, 250.0, "nonneg"),
    "node_disk_io_time_weighted": (0.05, 0.015, "util"),
    "node_disk_bytes_read": (4.0e5, 1.0e5, "nonneg"),
    "node_disk_bytes_written": (6.0e5, 1.2e5, "nonneg"),
    "node_disk_Vread_time": (20.0, 5.0, "nonneg"),
    "node_disk_Vwrite_time": (28.0, 6.0, "nonneg"),
    "node_network": (2.0e5, 5.0e4, "nonneg"),
    "node_network_transmit_bytes": (1.5e5, 4.0e4, "nonneg"),
    "node_network_receive_packets": (300.0, 60.0, "nonneg"),
    "node_network_transmit_packets": (260.0, 55.0, "nonneg"),
    "node_network_trLoss_packets": (0.5, 0.3, "nonneg"),
    "node_network_trLoss_packets_send": (0.4, 0.25, "nonneg"),
    "node_netstat_TcpExt_TCPOFOQueue": (5.0, 2.0, "nonneg"),
    "node_netstat_TcpExt_TCPOrigDataSent": (220.0, 50.0, "nonneg"),
    "node_netstat_TcpExt_TCPLos": (0.3, 0.2, "nonneg"),
    "node_Vnetwork_receive_bytes": (1.8e5, 4.5e4, "nonneg"),
    "node_Vnetwork_transmit_bytes": (1.4e5, 3.5e4, "nonneg"),
}

# anomaly type -> {attribute: shift in sigmas}; the last entries of each
# profile are the mild (<= 0.5 sigma) coupling onto a second view
SHIFT_PROFILES = {
    "cpu_Calculation": {
        "node_cpu_user": 4.0, "node_cpu_idle": -3.5, "node_cpu_runrate": 3.0,
        "node_cpu_running": 2.0, "node_vcpu_run": 1.5,
        "node_memory_Slab": 0.4,
    },
    "io_Operate": {
        "node_disk_await": 3.5, "node_disk_read_time_ms": 2.5, "node_disk_write_time_ms": 3.0,
        "node_disk_io_time_weighted": 3.0, "node_disk_bytes_written": 2.0,
        "node_cpu_iowait": 0.5,
    },
    "net_Operate": {
        "node_network": 3.5, "node_network_receive_packets": 3.0,
        "node_network_trLoss_packets": 2.5, "node_netstat_TcpExt_TCPOFOQueue": 2.0,
        "node_Vnetwork_receive_bytes": 2.5,
        "node_cpu_softing": 0.5,
    },
    "memory_Read": {
        "node_memory_Cached": 3.5, "node_memory_Buffers": 2.5, "node_memory": -2.5,
        "node_memory_VmallocRate": 2.0,
        "node_disk_bytes_read": 0.4,
    },
    "memory_Write": {
        "node_memory_Swapd": 3.5, "node_memory_Memfree": -3.0, "node_memory": -2.5,
        "node_memory_Sheme": 2.0,
        "node_disk_sectore_written": 0.4,
    },
}


@dataclass(frozen=True)
class FleetConfig:
    n_nodes: int = 5
    vms_per_node: int = 3
    period: float = 10.0
    duration: float = 3 * 3600.0
    seed: int = 0
    start_time: float = DEFAULT_START

    def __post_init__(self):
        if self.n_nodes < 1 or self.vms_per_node < 1:
            raise ValueError("need at least one node and one VM per node")
        if not self.period > 0 or not self.duration >= self.period:
            raise ValueError("duration must cover at least one sampling period")

    @property
    def hosts(self) -> list[str]:
        return [f"node{n + 1}-vm{v + 1}" for n in range(self.n_nodes) for v in range(self.vms_per_node)]

    @property
    def n_ticks(self) -> int:
        return int(self.duration // self.period)


@dataclass(frozen=True)
class Interval:
    host: str
    kind: str
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class AnomalyScript:
    intervals: tuple = ()
    fraction: float = DEFAULT_ANOMALY_FRACTION

    def write(self, path) -> None:
        lines = [f"# fraction={self.fraction!r}", "# host,type,start,duration"]
        lines += [f"{iv.host},{iv.kind},{iv.start!r},{iv.duration!r}" for iv in self.intervals]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path) -> "AnomalyScript":
        fraction = DEFAULT_ANOMALY_FRACTION
        intervals = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line.startswith("# fraction="):
                fraction = float(line.split("=", 1)[1])
                continue
            if not line or line.startswith("#"):
                continue
            host, kind, start, dur = (s.strip() for s in line.split(","))
            intervals.append(Interval(host, kind, float(start), float(dur)))
        return cls(tuple(intervals), fraction)


def _ar1(rng: SeededRng, n_ticks: int, n_attr: int) -> np.ndarray:
    eps = rng.normal(n_ticks * n_attr).reshape(n_ticks, n_attr)
    x = np.empty_like(eps)
    x[0] = eps[0]
    innov = np.sqrt(1.0 - PHI * PHI)
    for t in range(1, n_ticks):
        x[t] = PHI * x[t - 1] + innov * eps[t]
    return x


def _profile_arrays():
    mu = np.array([ATTRIBUTE_PROFILE[a][0] for a in ATTRIBUTES])
    sigma = np.array([ATTRIBUTE_PROFILE[a][1] for a in ATTRIBUTES])
    kinds = [ATTRIBUTE_PROFILE[a][2] for a in ATTRIBUTES]
    return mu, sigma, kinds


def _clip(values: np.ndarray, kinds) -> np.ndarray:
    util = np.array([k == "util" for k in kinds])
    nonneg = np.array([k == "nonneg" for k in kinds])
    values[:, util] = np.clip(values[:, util], 0.0, 1.0)
    values[:, nonneg] = np.maximum(values[:, nonneg], 0.0)
    return values


def gen_normal(cfg: FleetConfig) -> Dataset:
    """All-normal stream ordered by (timestamp, host)."""
    mu, sigma, kinds = _profile_arrays()
    root = SeededRng(cfg.seed)
    hosts = cfg.hosts
    n_ticks = cfg.n_ticks
    per_host = []
    for h_idx, _ in enumerate(hosts):
        rng = root.spawn(h_idx + 1)
        # each host sits at its own operating point within +-0.5 sigma
        offset = (rng.random(len(ATTRIBUTES)) - 0.5) * sigma
        noise = _ar1(rng, n_ticks, len(ATTRIBUTES))
        per_host.append(_clip(mu + offset + sigma * noise, kinds))
    values = np.stack(per_host, axis=1).reshape(n_ticks * len(hosts), len(ATTRIBUTES))
    times = cfg.start_time + cfg.period * np.arange(n_ticks)
    timestamps = np.repeat(times, len(hosts))
    return Dataset(timestamps, hosts * n_ticks, values, [NORMAL] * (n_ticks * len(hosts)))


def make_script(cfg: FleetConfig, fraction: float = DEFAULT_ANOMALY_FRACTION,
                min_len: int = 6, max_len: int = 18, seed: int | None = None) -> AnomalyScript:
    """Spread anomaly intervals over every host so about ``fraction`` of all
    ticks are anomalous and each type recurs throughout the stream."""
    if fraction == 0:
        return AnomalyScript((), 0.0)
    if not 0 < fraction < 1:
        raise ValueError("anomaly fraction must be in [0, 1)")
    rng = SeededRng(cfg.seed if seed is None else seed).spawn(0xA11)
    n_ticks = cfg.n_ticks
    intervals = []
    type_cursor = 0
    for host in cfg.hosts:
        budget = int(round(fraction * n_ticks))
        lengths = []
        while budget > 0:
            length = min(budget, min_len + int(rng.random(1)[0] * (max_len - min_len + 1)))
            lengths.append(length)
            budget -= length
        if not lengths:
            continue
        seg = n_ticks // len(lengths)
        for i, length in enumerate(lengths):
            slack = max(seg - length, 0)
            start_tick = i * seg + int(rng.random(1)[0] * (slack + 1))
            kind = ANOMALY_TYPES[type_cursor % len(ANOMALY_TYPES)]
            type_cursor += 1
            intervals.append(Interval(host, kind, cfg.start_time + start_tick * cfg.period,
                                      length * cfg.period))
    return AnomalyScript(tuple(intervals), fraction)


def validate_script(script: AnomalyScript, cfg: FleetConfig) -> None:
    end_time = cfg.start_time + cfg.n_ticks * cfg.period
    hosts = set(cfg.hosts)
    by_host: dict = {}
    for iv in script.intervals:
        if iv.kind not in ANOMALY_TYPES:
            raise ValueError(f"unknown anomaly type {iv.kind!r}")
        if iv.host not in hosts:
            raise ValueError(f"interval on unknown host {iv.host!r}")
        if iv.start < cfg.start_time or iv.end > end_time or iv.duration <= 0:
            raise ValueError(f"interval {iv} falls outside the stream")
        by_host.setdefault(iv.host, []).append(iv)
    for host, ivs in by_host.items():
        ivs.sort(key=lambda iv: iv.start)
        for a, b in zip(ivs, ivs[1:]):
            if b.start < a.end and a.kind != b.kind:
                raise ValueError(f"overlapping {a.kind} and {b.kind} intervals on {host}")


def inject(stream: Dataset, script: AnomalyScript, cfg: FleetConfig | None = None) -> Dataset:
    """Apply the script's shifts and overwrite labels inside each interval."""
    cfg = cfg or FleetConfig()
    validate_script(script, cfg)
    mu, sigma, kinds = _profile_arrays()
    values = stream.values.copy()
    labels = list(stream.labels)
    host_arr = np.array(stream.hosts)
    for iv in script.intervals:
        rows = np.flatnonzero((host_arr == iv.host) & (stream.timestamps >= iv.start)
                              & (stream.timestamps < iv.end))
        for attr, shift in SHIFT_PROFILES[iv.kind].items():
            j = ATTRIBUTE_INDEX[attr]
            values[rows, j] += shift * sigma[j]
        for r in rows:
            labels[r] = iv.kind
    return Dataset(stream.timestamps.copy(), list(stream.hosts), _clip(values, kinds), labels)


def simulate(cfg: FleetConfig | None = None, fraction: float = DEFAULT_ANOMALY_FRACTION,
             script: AnomalyScript | None = None) -> tuple[Dataset, AnomalyScript]:
    cfg = cfg or FleetConfig()
    script = make_script(cfg, fraction) if script is None else script
    return inject(gen_normal(cfg), script, cfg), script
