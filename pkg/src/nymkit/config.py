"""Engine configuration: sectioned key/value files plus CLI overrides.

Example:

    [engine]
    host_ram_budget_mb = 4096
    default_transport = onion
    verify_base_reads = true

    [spec]
    anon_ram_mb = 256
    anon_disk_mb = 256
    comm_ram_mb = 128
    comm_disk_mb = 16

    [dns]
    example.org = 203.0.113.10

    [relays]
    relay-01 = guard,exit
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .transports import Relay, TransportKind


@dataclass(frozen=True)
class NymBoxSpec:
    """Per-nym VM allocations; both disk and RAM are host-RAM-backed."""

    anon_ram_mb: int = 256
    anon_disk_mb: int = 256
    comm_ram_mb: int = 128
    comm_disk_mb: int = 16

    @property
    def anon_total_mb(self) -> int:
        return self.anon_ram_mb + self.anon_disk_mb

    @property
    def comm_total_mb(self) -> int:
        return self.comm_ram_mb + self.comm_disk_mb

    @property
    def total_mb(self) -> int:
        return self.anon_total_mb + self.comm_total_mb


@dataclass(frozen=True)
class LatencyModel:
    """Simulated per-action durations (seconds) for the phase breakdown."""

    vm_boot: float = 8.0
    transport_fresh: float = 6.0
    transport_seeded: float = 2.5    # guard reuse skips directory churn
    page_load: float = 3.0
    loader_overhead: float = 1.0
    download_per_mb: float = 0.8
    unpack: float = 0.5


DEFAULT_DNS = {
    "example.org": "203.0.113.10",
    "cloud.example": "203.0.113.20",
    "kernel.example": "203.0.113.30",
}

DEFAULT_RELAYS = tuple(
    Relay(f"relay-{i:02d}", ("guard", "exit") if i % 2 else ("guard",))
    for i in range(1, 11)
)


@dataclass(frozen=True)
class EngineConfig:
    host_ram_budget_mb: int = 8192
    spec: NymBoxSpec = field(default_factory=NymBoxSpec)
    default_transport: TransportKind = TransportKind.ONION_SIM
    relays: tuple = DEFAULT_RELAYS
    dns_table: dict = field(default_factory=lambda: dict(DEFAULT_DNS))
    lan_hosts: tuple = ("192.168.1.50",)
    # Model scale: engine byte pools allocate this many real bytes per
    # spec-MB so desk-scale trials stay cheap; metrics page pools are
    # unaffected (they count full-scale pages).
    pool_bytes_per_mb: int = 1024
    # Duplication model for samepage accounting: pages shared across every
    # VM pool (the common base image working set), per VM.
    ksm_shared_base_mb: float = 32.0
    link_capacity_bps: float = 10_000_000.0
    kdf_log2_n: int = 14
    latency: LatencyModel = field(default_factory=LatencyModel)
    verify_base_reads: bool = True
    rng_seed: Optional[int] = None


def _coerce(value: str):
    text = value.strip()
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def load_config(path, overrides: Optional[dict] = None) -> EngineConfig:
    """Read a config file and apply flat overrides (CLI flags win)."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep dns names and relay ids case-sensitive
    if path is not None:
        parser.read_string(Path(path).read_text())
    values: dict = {}
    if parser.has_section("engine"):
        for key, raw in parser.items("engine"):
            values[key] = _coerce(raw)
    if parser.has_section("spec"):
        spec_values = {k: _coerce(v) for k, v in parser.items("spec")}
        values["spec"] = NymBoxSpec(**spec_values)
    if parser.has_section("latency"):
        lat_values = {k: float(_coerce(v)) for k, v in parser.items("latency")}
        values["latency"] = LatencyModel(**lat_values)
    if parser.has_section("dns"):
        values["dns_table"] = {k: v.strip() for k, v in parser.items("dns")}
    if parser.has_section("relays"):
        values["relays"] = tuple(
            Relay(rid, tuple(flags.replace(" ", "").split(",")) if flags else ())
            for rid, flags in parser.items("relays"))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    if "default_transport" in values and isinstance(values["default_transport"], str):
        values["default_transport"] = TransportKind(values["default_transport"])
    config = EngineConfig()
    known = {f for f in config.__dataclass_fields__}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return replace(config, **values)
