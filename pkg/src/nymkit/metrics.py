"""Evaluation harness: samepage-merging accounting, per-nym RAM cost,
bandwidth trials over a shared simulated link, snapshot size series and
startup phase breakdowns.

Time here is simulated (ticks with configured per-action latencies); the
harness reproduces structural and ordinal properties of the reference
measurements, never wall-clock figures. Collection is append-only and
thread-safe; reports read immutable snapshots of the sample log.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import threading
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .transports import TransportInstance, measure_overhead

PAGE_SIZE = 4096


class MetricsError(Exception):
    pass


class InsufficientDataError(MetricsError):
    pass


# --- samepage merging -------------------------------------------------------

class PagePool:
    """One VM's host-RAM footprint as a list of page digests. Pools built
    from real bytes hash their chunks; synthetic pools model the default
    duplication structure (shared base pages + per-VM unique pages)."""

    def __init__(self, owner: str, page_digests: list):
        self.owner = owner
        self.page_digests = page_digests

    @property
    def page_count(self) -> int:
        return len(self.page_digests)

    @property
    def byte_size(self) -> int:
        return self.page_count * PAGE_SIZE

    @classmethod
    def from_bytes(cls, owner: str, data: bytes) -> "PagePool":
        digests = []
        for i in range(0, len(data), PAGE_SIZE):
            chunk = data[i:i + PAGE_SIZE]
            if len(chunk) < PAGE_SIZE:
                chunk = chunk + b"\x00" * (PAGE_SIZE - len(chunk))
            digests.append(b"raw:" + hashlib.sha256(chunk).digest())
        return cls(owner, digests)

    @classmethod
    def synthetic(cls, owner: str, total_mb: float, shared_mb: float,
                  base_token: str) -> "PagePool":
        total_pages = int(total_mb * 1024 * 1024) // PAGE_SIZE
        shared_pages = min(total_pages, int(shared_mb * 1024 * 1024) // PAGE_SIZE)
        base = base_token.encode("utf-8")[:12].ljust(12, b"\x00")
        own = owner.encode("utf-8")[:12].ljust(12, b"\x00")
        digests = [b"S" + base + i.to_bytes(4, "big") for i in range(shared_pages)]
        digests += [b"U" + own + i.to_bytes(4, "big")
                    for i in range(total_pages - shared_pages)]
        return cls(owner, digests)


@dataclass
class KsmReport:
    used_bytes_no_merge: int
    used_bytes_merged: int
    shared_page_count: int

    @property
    def saving_fraction(self) -> float:
        if self.used_bytes_no_merge == 0:
            return 0.0
        return 1.0 - self.used_bytes_merged / self.used_bytes_no_merge


def ksm_account(pools: list) -> KsmReport:
    """Merge accounting: every duplicate-digest group of size k frees k-1
    page frames."""
    counts = Counter()
    total_pages = 0
    for pool in pools:
        total_pages += pool.page_count
        counts.update(pool.page_digests)
    shared = sum(count - 1 for count in counts.values() if count > 1)
    no_merge = total_pages * PAGE_SIZE
    return KsmReport(used_bytes_no_merge=no_merge,
                     used_bytes_merged=no_merge - shared * PAGE_SIZE,
                     shared_page_count=shared)


def per_nym_ram(series: list) -> float:
    """Least-squares slope (bytes per nym) of a (nym count, used bytes) series."""
    if len(series) < 2:
        raise InsufficientDataError("need at least two points")
    xs = np.array([float(n) for n, _ in series])
    ys = np.array([float(b) for _, b in series])
    slope, _intercept = np.polyfit(xs, ys, 1)
    return float(slope)


# --- bandwidth trials -------------------------------------------------------

@dataclass
class BandwidthResult:
    nym_count: int
    payload_bytes: int
    overhead_ratio: float
    completion_times: list  # simulated seconds per nym
    capacity_bps: float


def fair_share_times(wire_bytes: int, nym_count: int, capacity_bps: float,
                     tick_s: float = 0.05) -> list:
    """Simulate N equal flows sharing one link fairly in discrete ticks;
    per-tick delivery never exceeds capacity. Returns fractional-tick
    completion times."""
    capacity_per_tick = capacity_bps / 8.0 * tick_s
    remaining = [float(wire_bytes)] * nym_count
    times = [0.0] * nym_count
    active = set(range(nym_count))
    now = 0.0
    while active:
        share = capacity_per_tick / len(active)
        finished = []
        for i in active:
            if remaining[i] <= share:
                times[i] = now + (remaining[i] / share) * tick_s
                remaining[i] = 0.0
                finished.append(i)
            else:
                remaining[i] -= share
        delivered = share * len(active)
        if delivered > capacity_per_tick + 1e-9:
            raise MetricsError("link capacity exceeded in tick")
        active -= set(finished)
        now += tick_s
    return times


def bandwidth_trial(instance: TransportInstance, payload_bytes: int,
                    nym_count: int, capacity_bps: float = 10_000_000.0,
                    tick_s: float = 0.05) -> BandwidthResult:
    ratio = measure_overhead(instance, payload_bytes)
    wire = int(payload_bytes * ratio)
    times = fair_share_times(wire, nym_count, capacity_bps, tick_s)
    return BandwidthResult(nym_count=nym_count, payload_bytes=payload_bytes,
                           overhead_ratio=ratio, completion_times=times,
                           capacity_bps=capacity_bps)


# --- startup phases ---------------------------------------------------------

class Phase(Enum):
    EPHEMERAL_LOADER = "ephemeral-loader"
    VM_BOOT = "vm-boot"
    TRANSPORT_STARTUP = "transport-startup"
    PAGE_LOAD = "page-load"


@dataclass
class PhaseTrace:
    nym_id: str
    usage_model: str  # ephemeral | persistent | preconfigured
    phases: list      # ordered (Phase, duration) pairs

    def duration(self, phase: Phase) -> Optional[float]:
        for name, value in self.phases:
            if name is phase:
                return value
        return None

    def total(self) -> float:
        return sum(value for _, value in self.phases)


@dataclass
class SizePoint:
    cycle: int
    archive_bytes: int
    anon_bytes: int
    comm_bytes: int

    @property
    def anon_fraction(self) -> float:
        total = self.anon_bytes + self.comm_bytes
        return self.anon_bytes / total if total else 0.0


@dataclass
class SizeSeries:
    nym_name: str
    mode: str
    points: list = field(default_factory=list)

    def archive_sizes(self) -> list:
        return [p.archive_bytes for p in self.points]


class Collector:
    """Append-only metrics sink shared by the engine."""

    def __init__(self):
        self._lock = threading.Lock()
        self.phase_traces: list = []
        self.size_series: dict = {}
        self.ksm_samples: list = []       # (nym_count, KsmReport)
        self.archive_sizes: list = []     # (object name, bytes)
        self.repair_deltas: list = []     # (os label, MB)
        self.bandwidth_results: list = []

    def record_phases(self, trace: PhaseTrace) -> None:
        with self._lock:
            self.phase_traces.append(trace)

    def record_size_point(self, nym_name: str, mode: str, point: SizePoint) -> None:
        with self._lock:
            series = self.size_series.setdefault(
                nym_name, SizeSeries(nym_name=nym_name, mode=mode))
            series.points.append(point)

    def record_ksm(self, nym_count: int, report: KsmReport) -> None:
        with self._lock:
            self.ksm_samples.append((nym_count, report))

    def record_archive(self, name: str, size: int) -> None:
        with self._lock:
            self.archive_sizes.append((name, size))

    def record_repair(self, os_label: str, delta_mb: float) -> None:
        with self._lock:
            self.repair_deltas.append((os_label, delta_mb))

    def record_bandwidth(self, result: BandwidthResult) -> None:
        with self._lock:
            self.bandwidth_results.append(result)

    # --- reports ---

    def phase_report(self) -> dict:
        """Mean duration per phase per usage model."""
        with self._lock:
            traces = list(self.phase_traces)
        sums: dict = {}
        counts: dict = {}
        for trace in traces:
            for phase, value in trace.phases:
                key = (trace.usage_model, phase)
                sums[key] = sums.get(key, 0.0) + value
                counts[key] = counts.get(key, 0) + 1
        report: dict = {}
        for (model, phase), total in sums.items():
            report.setdefault(model, {})[phase.value] = total / counts[(model, phase)]
        return report

    def runs_per_model(self) -> dict:
        with self._lock:
            traces = list(self.phase_traces)
        counts: dict = {}
        for trace in traces:
            counts[trace.usage_model] = counts.get(trace.usage_model, 0) + 1
        return counts


# --- exports ----------------------------------------------------------------

def rows_to_csv(header: list, rows: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def rows_to_ldjson(header: list, rows: list) -> str:
    return "\n".join(json.dumps(dict(zip(header, row)), sort_keys=True)
                     for row in rows)


def export_ram_per_nym(samples: list) -> tuple:
    """RAM usage and shared pages versus nym count (figure 3 analogue)."""
    header = ["nym_count", "used_bytes_no_merge", "used_bytes_merged",
              "shared_page_count"]
    rows = [[n, r.used_bytes_no_merge, r.used_bytes_merged, r.shared_page_count]
            for n, r in samples]
    return header, rows


def export_bandwidth(results: list) -> tuple:
    """Parallel download completion times (figure 5 analogue)."""
    header = ["nym_count", "payload_bytes", "overhead_ratio",
              "mean_completion_s", "max_completion_s"]
    rows = [[r.nym_count, r.payload_bytes, round(r.overhead_ratio, 9),
             round(sum(r.completion_times) / len(r.completion_times), 6),
             round(max(r.completion_times), 6)] for r in results]
    return header, rows


def export_size_series(series: SizeSeries) -> tuple:
    """Archive size per save/restore cycle (figure 6 analogue)."""
    header = ["cycle", "archive_bytes", "anon_fraction"]
    rows = [[p.cycle, p.archive_bytes, round(p.anon_fraction, 6)]
            for p in series.points]
    return header, rows


def export_phase_breakdown(report: dict) -> tuple:
    """Mean startup time by phase per usage model (figure 7 analogue)."""
    header = ["usage_model", "phase", "mean_duration_s"]
    rows = []
    for model in sorted(report):
        for phase in sorted(report[model]):
            rows.append([model, phase, round(report[model][phase], 6)])
    return header, rows
