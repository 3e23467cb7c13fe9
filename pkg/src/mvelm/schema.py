"""Metric schema: four sub-system views of eleven attributes each."""

from __future__ import annotations

VIEW_NAMES = ("cpu", "memory", "disk", "network")

VIEW_ATTRIBUTES = {
    "cpu": (
        "node_cpu_idle",
        "node_cpu_iowait",
        "node_cpu_softing",
        "node_cpu_system",
        "node_cpu_user",
        "node_cpu_nice",
        "node_cpu_irq",
        "node_cpu_cs",
        "node_cpu_running",
        "node_vcpu_run",
        "node_cpu_runrate",
    ),
    "memory": (
        "node_memory",
        "node_memory_Buffers",
        "node_memory_Cached",
        "node_memory_Swapd",
        "node_memory_MemTotal",
        "node_memory_Memfree",
        "node_memory_Slab",
        "node_memory_Sheme",
        "node_memory_VmallocTotal",
        "node_memory_VmallocRate",
        "node_memory_VmallocMax",
    ),
    "disk": (
        "node_disk_await",
        "node_disk_svc_time",
        "node_disk_read_time_ms",
        "node_disk_write_time_ms",
        "node_disk_sectors_written",
        "node_disk_sectore_written",
        "node_disk_io_time_weighted",
        "node_disk_bytes_read",
        "node_disk_bytes_written",
        "node_disk_Vread_time",
        "node_disk_Vwrite_time",
    ),
    "network": (
        "node_network",
        "node_network_transmit_bytes",
        "node_network_receive_packets",
        "node_network_transmit_packets",
        "node_network_trLoss_packets",
        # the receive- and send-side loss counters share one label upstream
        "node_network_trLoss_packets_send",
        "node_netstat_TcpExt_TCPOFOQueue",
        "node_netstat_TcpExt_TCPOrigDataSent",
        "node_netstat_TcpExt_TCPLos",
        "node_Vnetwork_receive_bytes",
        "node_Vnetwork_transmit_bytes",
    ),
}

ATTRIBUTES = tuple(a for v in VIEW_NAMES for a in VIEW_ATTRIBUTES[v])
ATTRIBUTE_VIEW = {a: v for v in VIEW_NAMES for a in VIEW_ATTRIBUTES[v]}
ATTRIBUTE_INDEX = {a: i for i, a in enumerate(ATTRIBUTES)}
VIEW_SLICES = {
    v: slice(i * 11, (i + 1) * 11) for i, v in enumerate(VIEW_NAMES)
}

NORMAL = "normal"
ANOMALY_TYPES = ("cpu_Calculation", "io_Operate", "net_Operate", "memory_Read", "memory_Write")
CLASSES = (NORMAL,) + ANOMALY_TYPES

assert len(ATTRIBUTES) == 44 and len(set(ATTRIBUTES)) == 44
