"""The Nym Manager: lifecycle state machine, VM pairing, usage modes,
store/load workflows, amnesia and secure erase.

Each nym is a pair of simulated VMs (AnonVM for the client workload, CommVM
for the anonymizer) built from one shared read-only base image plus
role-specific config layers, wired into the isolation topology, and backed
by explicit byte pools standing in for VM memory so that secure erase is a
testable operation. The engine serializes lifecycle transitions, enforces
the host RAM budget, and runs the store/load/snapshot workflows through the
nym's own transport.
"""

from __future__ import annotations

import hashlib
import pickle
import queue
import threading
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np

from . import hostnym, metrics, netfabric, overlay, sanivm, snapstore, transports
from .config import EngineConfig, NymBoxSpec


class NymcoreError(Exception):
    pass


class BudgetExceededError(NymcoreError):
    pass


class ModeForbidsStoreError(NymcoreError):
    pass


class ModeMismatchError(NymcoreError):
    pass


class IllegalTransitionError(NymcoreError):
    pass


class UnknownNymError(NymcoreError):
    pass


class InboundWriteError(NymcoreError):
    """Direct writes into the sanitized-inbound namespace are forbidden."""


class BaseImageTamperedError(NymcoreError):
    """Base-image chunk failed Merkle authentication; nym was shut down."""


class ApprovalPendingError(NymcoreError):
    pass


class ApprovalCancelledError(NymcoreError):
    pass


class NymMode(Enum):
    EPHEMERAL = "ephemeral"
    PERSISTENT = "persistent"
    PRECONFIGURED = "preconfigured"


class NymState(Enum):
    CREATED = "created"
    RUNNING = "running"
    PAUSED = "paused"
    STORING = "storing"
    TERMINATED = "terminated"


_LEGAL_TRANSITIONS = {
    NymState.CREATED: {NymState.RUNNING, NymState.TERMINATED},
    NymState.RUNNING: {NymState.PAUSED, NymState.TERMINATED},
    NymState.PAUSED: {NymState.RUNNING, NymState.STORING, NymState.TERMINATED},
    NymState.STORING: {NymState.RUNNING},
    NymState.TERMINATED: set(),
}


class StoreAction(Enum):
    STORE_THEN_TERMINATE = "store-then-terminate"
    DISCARD = "discard"


class VmMemoryPool:
    """Byte pool standing in for one VM's RAM + RAM-backed disk."""

    def __init__(self, size_bytes: int):
        self.buffer = bytearray(size_bytes)
        self._cursor = 0

    def write(self, data: bytes) -> None:
        if not self.buffer:
            return
        for byte in data:
            self.buffer[self._cursor] = byte
            self._cursor = (self._cursor + 1) % len(self.buffer)

    def erase(self) -> None:
        for i in range(len(self.buffer)):
            self.buffer[i] = 0

    def contains(self, pattern: bytes) -> bool:
        return pattern in bytes(self.buffer)


@dataclass
class NymRecord:
    nym_id: str
    mode: NymMode
    state: NymState
    spec: NymBoxSpec
    anon_stack: Optional[overlay.OverlayStack] = None
    comm_stack: Optional[overlay.OverlayStack] = None
    transport: Optional[transports.TransportInstance] = None
    guard_seed: Optional[transports.GuardSeed] = None
    inbound_dir: str = "/inbound"
    anon_pool: Optional[VmMemoryPool] = None
    comm_pool: Optional[VmMemoryPool] = None
    host: Optional[hostnym.HostNymAttachment] = None
    storage_name: Optional[str] = None
    created_at: float = 0.0
    _pending_phases: list = field(default_factory=list, repr=False)
    _usage_model: Optional[str] = field(default=None, repr=False)
    _visits: int = field(default=0, repr=False)

    @property
    def is_host_nym(self) -> bool:
        return self.host is not None


@dataclass
class StoredReceipt:
    backend_locator: str
    object_name: str
    version: int
    archive_digest: str
    archive_size: int
    anon_digest: str
    comm_digest: str

    @property
    def location(self) -> str:
        return f"{self.backend_locator}/{self.object_name}"


@dataclass
class PendingApproval:
    request_id: str
    nym_id: str
    file_name: str
    findings: list
    media: sanivm.MediaFile
    event: threading.Event = field(default_factory=threading.Event)
    plan: Optional[sanivm.ScrubPlan] = None
    override: bool = False
    cancelled: bool = False


def make_distribution_image() -> dict:
    """Deterministic synthetic base image shared by every VM."""
    files = {
        "/bin/sh": b"#!synthetic shell " + b"\x90" * 220,
        "/bin/browser": b"synthetic browser binary " + bytes(range(256)) * 3,
        "/etc/hostname": b"nymbox\n",
        "/etc/rc.local": b"# distribution startup: start desktop\n",
        "/etc/network/interfaces": b"auto eth0\niface eth0 inet dhcp\n",
        "/etc/wm/startup": b"exec panel\n",
        "/usr/lib/libanon.so": hashlib.sha256(b"libanon").digest() * 24,
        "/usr/lib/libproxy.so": hashlib.sha256(b"libproxy").digest() * 24,
        "/usr/share/doc/README": b"synthetic distribution image\n",
    }
    for i in range(16):
        files[f"/usr/share/data/blob{i:02d}"] = hashlib.sha256(
            f"blob{i}".encode()).digest() * 64
    return files


ANON_CONFIG_FILES = {
    "/etc/rc.local": b"# anon role: start browser via commvm wire\n",
    "/etc/network/interfaces": b"auto eth0\niface eth0 inet static\n"
                               b"address 10.0.2.15\ngateway 10.0.2.2\n",
    "/etc/wm/startup": b"exec browser --proxy=10.0.2.2\n",
}


def comm_config_files(kind: transports.TransportKind) -> dict:
    return {
        "/etc/rc.local": f"# comm role: start {kind.value} anonymizer\n".encode(),
        "/etc/network/interfaces": b"auto eth0\niface eth0 inet static\n"
                                   b"address 10.0.2.2\n",
        "/etc/anonymizer.conf": f"kind = {kind.value}\n".encode(),
    }


class _EngineNetworkView(transports.NetworkView):
    """Transport-side view backed by the live engine topology."""

    def __init__(self, engine: "NymEngine"):
        super().__init__(dns_table=engine.config.dns_table,
                         gateway_addr=netfabric.GATEWAY_EXTERNAL_ADDR)
        self._engine = engine

    def host_known(self, addr: str) -> bool:
        hosts = {n.label for n in self._engine.topology.internet_hosts()}
        return addr in hosts or addr in self.dns_table


class NymEngine:
    def __init__(self, config: Optional[EngineConfig] = None):
        self.config = config or EngineConfig()
        self.clock = 0.0
        self._lock = threading.RLock()
        self._counter = 0
        self.rng = np.random.default_rng(self.config.rng_seed)
        self.nyms: dict = {}
        self.receipts: list = []
        self.backends: dict = {}
        self.backend_hosts: dict = {}
        self.collector = metrics.Collector()
        self.sanivm = sanivm.SanitationVm()
        self._subscribers: list = []
        self._pending_approvals: dict = {}
        self.host_disks: dict = {}

        # Shared read-only base image, its serialized form (the simulated
        # host OS partition) and the pinned Merkle index over it.
        base = overlay.make_layer(make_distribution_image(), layer_id="base-image")
        self.base_layer = base
        data, extents = overlay.serialize_layer_with_extents(base)
        self.host_partition = bytearray(data)
        self.base_extents = extents
        self.base_index = overlay.build_merkle_index(bytes(data))
        self.base_digest = base.digest()

        self.anon_config = overlay.make_layer(ANON_CONFIG_FILES, layer_id="config-anon")
        self._comm_configs: dict = {}

        internet = tuple(sorted(set(self.config.dns_table.values())))
        self.topology = netfabric.base_topology(
            internet_hosts=internet, lan_hosts=self.config.lan_hosts)
        self.kdf_params = snapstore.KdfParams(log2_n=self.config.kdf_log2_n)

    # --- plumbing ---

    def _next_id(self) -> str:
        self._counter += 1
        return f"nym-{self._counter:04d}"

    def _tick(self, seconds: float) -> float:
        self.clock += seconds
        return seconds

    def register_backend(self, name: str, backend: snapstore.StorageBackend,
                         host: Optional[str] = None) -> None:
        self.backends[name] = backend
        if host:
            self.backend_hosts[name] = host

    def get_backend(self, name: str) -> snapstore.StorageBackend:
        if name not in self.backends:
            raise NymcoreError(f"unknown backend {name!r}")
        return self.backends[name]

    def subscribe(self) -> "queue.Queue":
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def _emit(self, event: dict) -> None:
        event = {"clock": round(self.clock, 6), **event}
        with self._lock:
            subscribers = list(self._subscribers)
        for q in subscribers:
            q.put(event)

    def _transition(self, nym: NymRecord, target: NymState) -> None:
        if target not in _LEGAL_TRANSITIONS[nym.state]:
            raise IllegalTransitionError(f"{nym.state.value} -> {target.value}")
        nym.state = target
        self._emit({"event": "nym-state", "nym_id": nym.nym_id,
                    "state": target.value, "mode": nym.mode.value})

    def _resolve(self, nym_or_id: Union[NymRecord, str]) -> NymRecord:
        if isinstance(nym_or_id, NymRecord):
            return nym_or_id
        if nym_or_id not in self.nyms:
            raise UnknownNymError(nym_or_id)
        return self.nyms[nym_or_id]

    def live_nyms(self) -> list:
        return [n for n in self.nyms.values() if n.state is not NymState.TERMINATED]

    def _check_budget(self, spec: NymBoxSpec) -> None:
        used = sum(n.spec.total_mb for n in self.live_nyms())
        if used + spec.total_mb > self.config.host_ram_budget_mb:
            raise BudgetExceededError(
                f"{used} MB used + {spec.total_mb} MB requested exceeds "
                f"{self.config.host_ram_budget_mb} MB budget")

    def _comm_config(self, kind: transports.TransportKind) -> overlay.Layer:
        if kind not in self._comm_configs:
            self._comm_configs[kind] = overlay.make_layer(
                comm_config_files(kind), layer_id=f"config-comm-{kind.value}")
        return self._comm_configs[kind]

    def _make_pool(self, total_mb: int) -> VmMemoryPool:
        return VmMemoryPool(total_mb * self.config.pool_bytes_per_mb)

    def _start_transport(self, nym_id: str, kind: transports.TransportKind,
                         guard_seed) -> transports.TransportInstance:
        return transports.start_transport(
            kind, nym_id, list(self.config.relays), guard_seed=guard_seed,
            network=_EngineNetworkView(self))

    # --- lifecycle ---

    def create_nym(self, mode: NymMode,
                   transport_kind: Optional[transports.TransportKind] = None,
                   spec: Optional[NymBoxSpec] = None,
                   guard_seed: Optional[transports.GuardSeed] = None,
                   record_phases: bool = True) -> NymRecord:
        with self._lock:
            spec = spec or self.config.spec
            kind = transport_kind or self.config.default_transport
            self._check_budget(spec)
            nym_id = self._next_id()

            netfabric.build_nymbox_topology(nym_id, self.topology)
            anon_stack = overlay.stack_layers(
                self.base_layer, self.anon_config,
                overlay.Layer(f"{nym_id}-anon-rw", overlay.LayerMode.WRITABLE))
            comm_stack = overlay.stack_layers(
                self.base_layer, self._comm_config(kind),
                overlay.Layer(f"{nym_id}-comm-rw", overlay.LayerMode.WRITABLE))
            transport = self._start_transport(nym_id, kind, guard_seed)

            nym = NymRecord(
                nym_id=nym_id, mode=mode, state=NymState.CREATED, spec=spec,
                anon_stack=anon_stack, comm_stack=comm_stack,
                transport=transport, guard_seed=guard_seed,
                anon_pool=self._make_pool(spec.anon_total_mb),
                comm_pool=self._make_pool(spec.comm_total_mb),
                created_at=self.clock)
            self.nyms[nym_id] = nym

            lat = self.config.latency
            boot = self._tick(lat.vm_boot)
            startup = self._tick(lat.transport_seeded if guard_seed
                                 else lat.transport_fresh)
            if record_phases:
                nym._usage_model = mode.value
                nym._pending_phases = [(metrics.Phase.VM_BOOT, boot),
                                       (metrics.Phase.TRANSPORT_STARTUP, startup)]
            self._transition(nym, NymState.RUNNING)
            return nym

    def pause_nym(self, nym_or_id) -> None:
        with self._lock:
            self._transition(self._resolve(nym_or_id), NymState.PAUSED)

    def resume_nym(self, nym_or_id) -> None:
        with self._lock:
            self._transition(self._resolve(nym_or_id), NymState.RUNNING)

    def terminate_nym(self, nym_or_id) -> None:
        """Secure-erase pools and writable layers, drop topology nodes.

        Idempotent on already-terminated nyms."""
        with self._lock:
            nym = self._resolve(nym_or_id)
            if nym.state is NymState.TERMINATED:
                return
            if nym.state is NymState.STORING:
                raise IllegalTransitionError("cannot terminate mid-store")
            for pool in (nym.anon_pool, nym.comm_pool):
                if pool is not None:
                    pool.erase()
            for stack in (nym.anon_stack, nym.comm_stack):
                if stack is None:
                    continue
                top = stack.writable
                for path in list(top.entries):
                    entry = top.entries[path]
                    top.entries[path] = overlay.FileEntry.make(
                        b"\x00" * len(entry.content))
                top.entries.clear()
                top.whiteouts.clear()
            if nym.host is not None and \
                    nym.host.policy is hostnym.PersistenceChoice.DISCARD:
                nym.host.cow.discard_upper()
            if nym.transport is not None:
                nym.transport.stop()
            self.topology.remove_nym(nym.nym_id)
            nym.anon_stack = None
            nym.comm_stack = None
            nym.anon_pool = None
            nym.comm_pool = None
            nym.transport = None
            nym.host = None
            nym._pending_phases = []
            nym.state = NymState.TERMINATED
            self._emit({"event": "nym-state", "nym_id": nym.nym_id,
                        "state": "terminated", "mode": nym.mode.value})

    def session_end_policy(self, nym_or_id) -> StoreAction:
        nym = self._resolve(nym_or_id)
        if nym.mode is NymMode.PERSISTENT:
            return StoreAction.STORE_THEN_TERMINATE
        return StoreAction.DISCARD

    # --- store / load / snapshot ---

    def _backend_stream(self, nym: NymRecord, backend) -> Optional[transports.StreamHandle]:
        if not backend.requires_stream:
            return None
        host = None
        for name, b in self.backends.items():
            if b is backend:
                host = self.backend_hosts.get(name)
        host = host or next(iter(self.config.dns_table.values()))
        addr = self.config.dns_table.get(host, host)
        return transports.proxy_connect(
            nym.transport, transports.ProxyRequest(dest_addr=addr, dest_port=443))

    def store_nym(self, nym_or_id, name: str, password: str, backend,
                  _mark_boot: bool = False) -> StoredReceipt:
        """Pause, sync, pack, upload through the nym's own transport, resume.

        Atomic: any failure restores the Running state and leaves stored
        versions untouched."""
        with self._lock:
            nym = self._resolve(nym_or_id)
            if isinstance(backend, str):
                backend = self.get_backend(backend)
            if nym.mode is NymMode.EPHEMERAL:
                raise ModeForbidsStoreError("ephemeral nyms are never stored")
            if nym.state not in (NymState.RUNNING, NymState.PAUSED):
                raise IllegalTransitionError(f"cannot store while {nym.state.value}")
            if nym.state is NymState.RUNNING:
                self._transition(nym, NymState.PAUSED)
            self._transition(nym, NymState.STORING)
            try:
                anon_layer = nym.anon_stack.extract_writable()
                comm_layer = nym.comm_stack.extract_writable()
                manifest = snapstore.make_manifest(name, nym.mode.value)
                blob = snapstore.pack(anon_layer, comm_layer, manifest, password,
                                      kdf_params=self.kdf_params)
                via = self._backend_stream(nym, backend)
                version = backend.put(name, blob, via=via)
                if _mark_boot:
                    backend.set_alias(name, "boot", version)
            except Exception:
                self._transition(nym, NymState.RUNNING)
                raise
            self._transition(nym, NymState.RUNNING)
            nym.storage_name = name
            receipt = StoredReceipt(
                backend_locator=backend.locator, object_name=name, version=version,
                archive_digest=hashlib.sha256(blob).hexdigest(),
                archive_size=len(blob),
                anon_digest=manifest.anon_digest, comm_digest=manifest.comm_digest)
            self.receipts.append(receipt)
            self.collector.record_archive(name, len(blob))
            self.collector.record_size_point(
                name, nym.mode.value,
                metrics.SizePoint(cycle=len([r for r in self.receipts
                                             if r.object_name == name]),
                                  archive_bytes=len(blob),
                                  anon_bytes=anon_layer.byte_size(),
                                  comm_bytes=comm_layer.byte_size()))
            self._emit({"event": "nym-stored", "nym_id": nym.nym_id,
                        "object": name, "version": version})
            return receipt

    def snapshot_nym(self, nym_or_id, name: str, password: str, backend) -> StoredReceipt:
        """Store and mark the archive as the nym's boot image: every later
        load starts from this snapshot, discarding session changes."""
        nym = self._resolve(nym_or_id)
        if nym.mode is not NymMode.PRECONFIGURED:
            raise ModeMismatchError("snapshot applies to preconfigured nyms only")
        return self.store_nym(nym, name, password, backend, _mark_boot=True)

    def load_nym(self, name: str, password: str, backend,
                 transport_kind: Optional[transports.TransportKind] = None,
                 seeded_loader: bool = True) -> NymRecord:
        """Fetch with a throwaway ephemeral nym, unpack, and resume the nym
        with the guard seed derived from (storage location, password)."""
        with self._lock:
            if isinstance(backend, str):
                backend = self.get_backend(backend)
            kind = transport_kind or self.config.default_transport
            location = f"{backend.locator}/{name}"
            seed = snapstore.derive_guard_seed(location, password)

            loader_started = self.clock
            loader = self.create_nym(
                NymMode.EPHEMERAL, transport_kind=kind,
                guard_seed=seed if seeded_loader else None, record_phases=False)
            try:
                via = self._backend_stream(loader, backend)
                boot_version = backend.get_alias(name, "boot")
                blob = backend.get(name, version=boot_version, via=via)
            finally:
                self.terminate_nym(loader)

            anon_layer, comm_layer, manifest = snapstore.unpack(blob, password)
            lat = self.config.latency
            loader_phase = (self.clock - loader_started
                            + self._tick(lat.loader_overhead)
                            + self._tick(len(blob) / 1e6 * lat.download_per_mb)
                            + self._tick(lat.unpack))

            mode = NymMode(manifest.mode)
            spec = self.config.spec
            self._check_budget(spec)
            nym_id = self._next_id()
            netfabric.build_nymbox_topology(nym_id, self.topology)
            anon_stack = overlay.restore_stack(self.base_layer, self.anon_config,
                                               anon_layer)
            comm_stack = overlay.restore_stack(self.base_layer,
                                               self._comm_config(kind), comm_layer)
            transport = self._start_transport(nym_id, kind, seed)
            nym = NymRecord(
                nym_id=nym_id, mode=mode, state=NymState.CREATED, spec=spec,
                anon_stack=anon_stack, comm_stack=comm_stack,
                transport=transport, guard_seed=seed,
                anon_pool=self._make_pool(spec.anon_total_mb),
                comm_pool=self._make_pool(spec.comm_total_mb),
                storage_name=name, created_at=self.clock)
            self.nyms[nym_id] = nym
            boot = self._tick(lat.vm_boot)
            startup = self._tick(lat.transport_seeded)
            nym._usage_model = mode.value
            nym._pending_phases = [
                (metrics.Phase.EPHEMERAL_LOADER, loader_phase),
                (metrics.Phase.VM_BOOT, boot),
                (metrics.Phase.TRANSPORT_STARTUP, startup)]
            self._transition(nym, NymState.RUNNING)
            self._emit({"event": "nym-loaded", "nym_id": nym_id, "object": name})
            return nym

    # --- client workload (the scripted stand-in for a real browser) ---

    def client_write(self, nym_or_id, path: str, content: bytes,
                     metadata: Optional[dict] = None) -> None:
        nym = self._resolve(nym_or_id)
        if nym.state is not NymState.RUNNING:
            raise IllegalTransitionError("workload requires a running nym")
        if path == nym.inbound_dir or path.startswith(nym.inbound_dir + "/"):
            raise InboundWriteError(
                "inbound files arrive only through the sanitation pipeline")
        nym.anon_stack.write(path, content, metadata)
        nym.anon_pool.write(content)

    def client_remove(self, nym_or_id, path: str) -> None:
        nym = self._resolve(nym_or_id)
        nym.anon_stack.remove(path)

    def client_read(self, nym_or_id, path: str) -> Optional[overlay.FileEntry]:
        """Read through the overlay; base-layer reads verify their backing
        chunks against the pinned Merkle root and shut the nym down on any
        mismatch."""
        nym = self._resolve(nym_or_id)
        entry, source = nym.anon_stack.read_with_source(path)
        if source is self.base_layer and self.config.verify_base_reads:
            start, end = self.base_extents[path]
            size = self.base_index.chunk_size
            first, last = start // size, (end - 1) // size
            for chunk_no in range(first, last + 1):
                chunk = bytes(self.host_partition[chunk_no * size:(chunk_no + 1) * size])
                try:
                    overlay.verify_chunk(self.base_index, chunk_no, chunk)
                except overlay.TamperDetectedError:
                    self.terminate_nym(nym)
                    self._emit({"event": "tamper-shutdown", "nym_id": nym.nym_id,
                                "path": path, "chunk": chunk_no})
                    raise BaseImageTamperedError(
                        f"base image chunk {chunk_no} modified; "
                        f"{nym.nym_id} shut down") from None
        return entry

    def client_fetch(self, nym_or_id, site: str, nbytes: int = 4096) -> bytes:
        """Resolve and fetch a page through the nym's transport; returns the
        synthetic page body."""
        nym = self._resolve(nym_or_id)
        if nym.state is not NymState.RUNNING:
            raise IllegalTransitionError("workload requires a running nym")
        addr = transports.resolve_dns(nym.transport, site)
        stream = transports.proxy_connect(
            nym.transport, transports.ProxyRequest(dest_addr=addr, dest_port=80,
                                                   payload=b"GET / HTTP/1.1"))
        body = hashlib.sha256(f"{site}:{nym._visits}".encode()).digest()
        body = (body * (nbytes // 32 + 1))[:nbytes]
        stream.send(body)
        stream.close()
        nym._visits += 1
        took = self._tick(self.config.latency.page_load)
        if nym._pending_phases:
            nym._pending_phases.append((metrics.Phase.PAGE_LOAD, took))
            self.collector.record_phases(metrics.PhaseTrace(
                nym_id=nym.nym_id, usage_model=nym._usage_model or nym.mode.value,
                phases=nym._pending_phases))
            nym._pending_phases = []
        return body

    def visit_and_cache(self, nym_or_id, site: str = "example.org",
                        cache_bytes: int = 2048) -> None:
        """One synthetic browsing step: fetch a page, write cache entries.

        Cache entries accumulate across sessions (numbered past any entries
        restored from a stored archive), the way a real browser cache grows."""
        nym = self._resolve(nym_or_id)
        body = self.client_fetch(nym, site, min(cache_bytes, 4096))
        prefix = f"/home/user/.cache/{site}/"
        existing = sum(1 for p in nym.anon_stack.visible_paths()
                       if p.startswith(prefix))
        filler = self.rng.integers(0, 256, size=cache_bytes, dtype=np.uint8)
        self.client_write(nym, f"{prefix}{existing + 1:04d}",
                          bytes(filler), {"mtime": f"{self.clock:.1f}"})
        self.client_write(nym, "/home/user/.history",
                          body[:64] + f" visit {nym._visits}".encode())
        # The CommVM accumulates a little anonymizer state per session.
        nym.comm_stack.write("/var/lib/anon/state",
                             f"guard={nym.transport.circuit.entry_guard}\n".encode()
                             if nym.transport.circuit else b"state\n")
        nym.comm_pool.write(b"circuit refresh")

    # --- sanitized transfer ---

    def mount_host_sources(self, host_view: dict) -> sanivm.SourceCatalog:
        return self.sanivm.mount(host_view)

    def place_inbound(self, nym: NymRecord, media: sanivm.MediaFile) -> str:
        """Hypervisor side of the shared-folder hop; sanivm-only entry."""
        dest = f"{nym.inbound_dir}/{media.name}"
        nym.anon_stack.writable.put(dest, media.payload)
        return dest

    def transfer_file(self, nym_or_id, media: sanivm.MediaFile,
                      plan: sanivm.ScrubPlan, override: bool = False) -> str:
        nym = self._resolve(nym_or_id)
        if nym.state is NymState.TERMINATED:
            raise UnknownNymError(f"{nym.nym_id} is terminated")
        cleaned = self.sanivm.prepare_transfer(
            media, plan, nym.nym_id, override=override,
            rng=np.random.default_rng(int(self.rng.integers(0, 2**32))))
        dest = self.place_inbound(nym, cleaned)
        self._emit({"event": "transfer-complete", "nym_id": nym.nym_id,
                    "file": media.name, "dest": dest, "override": override})
        return dest

    def request_transfer(self, nym_or_id, media: sanivm.MediaFile,
                         plan: Optional[sanivm.ScrubPlan] = None,
                         timeout: float = 30.0) -> str:
        """Approval-gated transfer: blocks until a reviewer resolves the
        pending request (or the wait times out and the operation aborts)."""
        nym = self._resolve(nym_or_id)
        if nym.state is NymState.TERMINATED:
            raise UnknownNymError(f"{nym.nym_id} is terminated")
        findings = self.sanivm.analyze(media)
        pending = PendingApproval(
            request_id=f"req-{uuid.uuid4().hex[:8]}", nym_id=nym.nym_id,
            file_name=media.name, findings=findings, media=media, plan=plan)
        with self._lock:
            self._pending_approvals[pending.request_id] = pending
        self._emit({
            "event": "approval-request", "request_id": pending.request_id,
            "nym_id": nym.nym_id, "file": media.name,
            "findings": [{"field": f.field, "severity": f.severity.value,
                          "rationale": f.rationale} for f in findings],
        })
        resolved = pending.event.wait(timeout)
        with self._lock:
            self._pending_approvals.pop(pending.request_id, None)
        if not resolved or pending.cancelled:
            self._emit({"event": "approval-cancelled",
                        "request_id": pending.request_id,
                        "reason": "timeout" if not resolved else "cancelled"})
            raise ApprovalCancelledError(pending.request_id)
        return self.transfer_file(nym, media, pending.plan, pending.override)

    def resolve_approval(self, request_id: str,
                         plan: Optional[sanivm.ScrubPlan] = None,
                         override: bool = False, cancel: bool = False) -> None:
        with self._lock:
            pending = self._pending_approvals.get(request_id)
            if pending is None:
                raise NymcoreError(f"no pending approval {request_id}")
            pending.plan = plan if plan is not None else pending.plan \
                or sanivm.ScrubPlan(transforms=())
            pending.override = override
            pending.cancelled = cancel
            pending.event.set()

    def pending_approvals(self) -> list:
        with self._lock:
            return list(self._pending_approvals.values())

    # --- isolation probe ---

    def probe(self) -> netfabric.LeakReport:
        report = netfabric.probe_isolation(self.topology)
        self._emit({"event": "probe-result",
                    "attempted": len(report.attempted),
                    "delivered": len(report.delivered),
                    "violations": len(report.violations)})
        return report

    # --- installed OS as a nym ---

    def boot_installed_os(self, disk_or_cow, spec: Optional[NymBoxSpec] = None,
                          transport_kind: Optional[transports.TransportKind]
                          = None) -> NymRecord:
        """Boot the machine's installed OS in a non-anonymous nymbox over a
        block COW. Windows images on bare metal must be repaired first.

        Host nyms default to the incognito transport: the installed OS is
        not anonymous and routing it through an anonymizer does not make it
        so. transport_kind overrides that, for callers who accept this."""
        with self._lock:
            hostnym.check_bootable(disk_or_cow)
            cow = disk_or_cow if isinstance(disk_or_cow, hostnym.CowDisk) \
                else hostnym.CowDisk(disk_or_cow)
            spec = spec or self.config.spec
            self._check_budget(spec)
            kind = transport_kind or transports.TransportKind.INCOGNITO
            nym_id = self._next_id()
            netfabric.build_nymbox_topology(nym_id, self.topology)
            comm_stack = overlay.stack_layers(
                self.base_layer, self._comm_config(kind),
                overlay.Layer(f"{nym_id}-comm-rw", overlay.LayerMode.WRITABLE))
            transport = self._start_transport(nym_id, kind, None)
            nym = NymRecord(
                nym_id=nym_id, mode=NymMode.EPHEMERAL, state=NymState.CREATED,
                spec=spec, anon_stack=None, comm_stack=comm_stack,
                transport=transport,
                anon_pool=self._make_pool(spec.anon_total_mb),
                comm_pool=self._make_pool(spec.comm_total_mb),
                host=hostnym.HostNymAttachment(cow=cow), created_at=self.clock)
            self.nyms[nym_id] = nym
            self.host_disks[nym_id] = cow.lower
            self._tick(self.config.latency.vm_boot)
            self._transition(nym, NymState.RUNNING)
            self._emit({"event": "host-nym", "nym_id": nym_id,
                        "os": cow.lower.os_label.value})
            return nym

    def repair_host_disk(self, disk: hostnym.HostDiskImage) -> hostnym.CowDisk:
        cow = hostnym.repair_os(disk)
        self.collector.record_repair(disk.os_label.value,
                                     hostnym.repair_delta_mb(disk.os_label))
        return cow

    def set_persistence_policy(self, nym_or_id,
                               choice: hostnym.PersistenceChoice) -> None:
        nym = self._resolve(nym_or_id)
        if nym.host is None:
            raise NymcoreError("not a host nym")
        if nym.state not in (NymState.RUNNING, NymState.PAUSED):
            raise IllegalTransitionError("host nym must be running or paused")
        nym.host.policy = choice

    def confirm_write_back(self, nym_or_id) -> hostnym.HostDiskImage:
        nym = self._resolve(nym_or_id)
        if nym.host is None or nym.host.policy is not hostnym.PersistenceChoice.WRITE_BACK:
            raise NymcoreError("write-back requires the WriteBack policy")
        merged = nym.host.cow.merge()
        nym.host.cow = hostnym.CowDisk(merged)
        self.host_disks[nym.nym_id] = merged
        return merged

    def store_cow(self, nym_or_id, name: str, password: str, backend) -> StoredReceipt:
        nym = self._resolve(nym_or_id)
        if isinstance(backend, str):
            backend = self.get_backend(backend)
        if nym.host is None:
            raise NymcoreError("not a host nym")
        cow = nym.host.cow
        upper_layer = overlay.make_layer(hostnym.cow_to_layer_entries(cow),
                                         layer_id=f"{nym.nym_id}-cow")
        empty = overlay.make_layer({}, layer_id="cow-empty")
        manifest = snapstore.make_manifest(
            name, "host-cow", extra={"lower_digest": cow.lower.digest(),
                                     "block_size": cow.lower.block_size})
        blob = snapstore.pack(upper_layer, empty, manifest, password,
                              kdf_params=self.kdf_params)
        via = self._backend_stream(nym, backend)
        version = backend.put(name, blob, via=via)
        nym.host.lower_digest_at_store = cow.lower.digest()
        receipt = StoredReceipt(
            backend_locator=backend.locator, object_name=name, version=version,
            archive_digest=hashlib.sha256(blob).hexdigest(), archive_size=len(blob),
            anon_digest=manifest.anon_digest, comm_digest=manifest.comm_digest)
        self.receipts.append(receipt)
        return receipt

    def restore_cow(self, name: str, password: str, backend,
                    disk: hostnym.HostDiskImage) -> hostnym.CowDisk:
        """Rebuild a stored COW over the given disk; refuses a changed base."""
        if isinstance(backend, str):
            backend = self.get_backend(backend)
        blob = backend.get(name)
        upper_layer, _, manifest = snapstore.unpack(blob, password)
        if manifest.extra.get("lower_digest") != disk.digest():
            raise hostnym.StaleBaseError(
                "underlying disk changed since the COW was stored")
        entries = {p: e.content for p, e in upper_layer.entries.items()}
        return hostnym.CowDisk(disk, hostnym.layer_entries_to_upper(entries))

    # --- metrics experiments ---

    def ksm_pools(self) -> list:
        """Page pools for the hypervisor plus every live VM under the
        configured duplication model (full-scale page counts)."""
        shared = self.config.ksm_shared_base_mb
        base_token = self.base_digest[:12]
        pools = [metrics.PagePool.synthetic(
            "hypervisor", self.config.spec.anon_total_mb, shared, base_token)]
        for nym in self.live_nyms():
            pools.append(metrics.PagePool.synthetic(
                f"{nym.nym_id}-anon", nym.spec.anon_total_mb, shared, base_token))
            pools.append(metrics.PagePool.synthetic(
                f"{nym.nym_id}-comm", nym.spec.comm_total_mb, shared, base_token))
        return pools

    def ksm_sample(self) -> metrics.KsmReport:
        report = metrics.ksm_account(self.ksm_pools())
        self.collector.record_ksm(len(self.live_nyms()), report)
        return report

    def bandwidth_experiment(self, kind: transports.TransportKind,
                             payload_bytes: int, counts: tuple = (1, 2, 4, 8)) -> list:
        results = []
        instance = transports.start_transport(
            kind, "bench", list(self.config.relays),
            network=_EngineNetworkView(self))
        for n in counts:
            result = metrics.bandwidth_trial(
                instance, payload_bytes, n,
                capacity_bps=self.config.link_capacity_bps)
            self.collector.record_bandwidth(result)
            results.append(result)
        return results

    def size_series_experiment(self, mode: NymMode, name: str, password: str,
                               backend, cycles: int = 5,
                               cache_bytes: int = 3000) -> metrics.SizeSeries:
        """Save/restore cycles under the synthetic browsing workload.

        Persistent nyms store after every session (the archive accumulates
        cache); preconfigured nyms keep booting their one snapshot."""
        if mode not in (NymMode.PERSISTENT, NymMode.PRECONFIGURED):
            raise NymcoreError("size series applies to quasi-persistent modes")
        if isinstance(backend, str):
            backend = self.get_backend(backend)
        series = metrics.SizeSeries(nym_name=name, mode=mode.value)

        def point(cycle, receipt, anon_layer, comm_layer):
            series.points.append(metrics.SizePoint(
                cycle=cycle, archive_bytes=receipt.archive_size,
                anon_bytes=anon_layer.byte_size(),
                comm_bytes=comm_layer.byte_size()))

        nym = self.create_nym(mode)
        self.visit_and_cache(nym, cache_bytes=cache_bytes)
        if mode is NymMode.PERSISTENT:
            receipt = self.store_nym(nym, name, password, backend)
            point(1, receipt, nym.anon_stack.extract_writable(),
                  nym.comm_stack.extract_writable())
            self.terminate_nym(nym)
            for cycle in range(2, cycles + 1):
                nym = self.load_nym(name, password, backend)
                self.visit_and_cache(nym, cache_bytes=cache_bytes)
                receipt = self.store_nym(nym, name, password, backend)
                point(cycle, receipt, nym.anon_stack.extract_writable(),
                      nym.comm_stack.extract_writable())
                self.terminate_nym(nym)
        else:
            receipt = self.snapshot_nym(nym, name, password, backend)
            boot_anon = nym.anon_stack.extract_writable()
            boot_comm = nym.comm_stack.extract_writable()
            point(1, receipt, boot_anon, boot_comm)
            self.terminate_nym(nym)
            for cycle in range(2, cycles + 1):
                nym = self.load_nym(name, password, backend)
                self.visit_and_cache(nym, cache_bytes=cache_bytes)
                self.terminate_nym(nym)  # session changes discarded
                point(cycle, receipt, boot_anon, boot_comm)
        return series

    def startup_time_experiment(self, mode: NymMode, runs: int = 5,
                                backend=None, password: str = "pw") -> list:
        """Timed startups per usage model; phase traces land in the collector."""
        if isinstance(backend, str):
            backend = self.get_backend(backend)
        traces_before = len(self.collector.phase_traces)
        if mode is NymMode.EPHEMERAL:
            for _ in range(runs):
                nym = self.create_nym(mode)
                self.visit_and_cache(nym)
                self.terminate_nym(nym)
        else:
            name = f"startup-{mode.value}"
            nym = self.create_nym(mode)
            self.visit_and_cache(nym)
            if mode is NymMode.PERSISTENT:
                self.store_nym(nym, name, password, backend)
            else:
                self.snapshot_nym(nym, name, password, backend)
            self.terminate_nym(nym)
            for _ in range(runs):
                nym = self.load_nym(name, password, backend)
                self.visit_and_cache(nym)
                self.terminate_nym(nym)
        return self.collector.phase_traces[traces_before:]

    # --- engine state introspection ---

    def serialized_state(self) -> bytes:
        """Canonical byte dump of everything the engine holds in memory;
        the amnesia tests scan this for planted canaries."""
        def layer_dump(layer):
            if layer is None:
                return None
            return (sorted((p, e.content, e.metadata)
                           for p, e in layer.entries.items()),
                    sorted(layer.whiteouts))

        state = {
            "clock": self.clock,
            "nyms": {},
            "topology": sorted(n.short() for n in self.topology.nodes),
            "wires": sorted(tuple(sorted(n.short() for n in w))
                            for w in self.topology.wires),
            "sanivm": {
                "folder": list(self.sanivm.hypervisor_folder),
                "audit": self.sanivm.audit_ldjson(),
            },
            "receipts": [(r.object_name, r.version, r.archive_digest)
                         for r in self.receipts],
            "backends": {},
            "metrics": {
                "archives": list(self.collector.archive_sizes),
                "phases": [(t.nym_id, t.usage_model,
                            [(p.value, d) for p, d in t.phases])
                           for t in self.collector.phase_traces],
            },
        }
        for nym_id, nym in self.nyms.items():
            state["nyms"][nym_id] = {
                "mode": nym.mode.value,
                "state": nym.state.value,
                "anon": layer_dump(nym.anon_stack.writable if nym.anon_stack else None),
                "comm": layer_dump(nym.comm_stack.writable if nym.comm_stack else None),
                "anon_pool": bytes(nym.anon_pool.buffer) if nym.anon_pool else b"",
                "comm_pool": bytes(nym.comm_pool.buffer) if nym.comm_pool else b"",
                "transport": nym.transport.serialize_state() if nym.transport else b"",
                "cow": sorted(nym.host.cow.upper.items()) if nym.host else None,
            }
        for name, backend in self.backends.items():
            if isinstance(backend, snapstore.MockCloudBackend):
                state["backends"][name] = {
                    "objects": {k: list(v) for k, v in backend.objects.items()},
                    "log": list(backend.access_log),
                }
            else:
                state["backends"][name] = {"locator": backend.locator}
        return pickle.dumps(state)

    def summary(self) -> list:
        rows = []
        for nym in self.nyms.values():
            rows.append({
                "nym_id": nym.nym_id,
                "mode": nym.mode.value,
                "state": nym.state.value,
                "transport": nym.transport.kind.value if nym.transport else None,
                "guard": (nym.transport.circuit.entry_guard
                          if nym.transport and nym.transport.circuit else None),
                "seeded": nym.guard_seed is not None,
                "host_nym": nym.is_host_nym,
                "storage": nym.storage_name,
                "total_mb": nym.spec.total_mb,
            })
        return rows
