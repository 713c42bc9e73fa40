"""Pluggable anonymizer instances hosted in each nym's CommVM.

Three kinds behind one proxy interface:

* Incognito — plain NAT passthrough: zero framing, the destination sees the
  gateway's external address. Fast, no network-level anonymity.
* OnionSim — three-hop circuit simulator (guard, middle, exit) with
  fixed-size cells; the destination sees the exit relay. The entry guard is
  a deterministic function of a guard seed so quasi-persistent nyms keep
  the same guard across restores.
* DcnetSim — broadcast-round simulator in the dining-cryptographers style:
  every member transmits every round, so wire cost scales with the member
  count. The destination sees a digest-derived collective identity.

Instances are strictly per-nym; compromising one (fault injection) must not
perturb any other instance's circuit state.
"""

from __future__ import annotations

import hashlib
import os
import pickle
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .netfabric import GATEWAY_EXTERNAL_ADDR


class TransportError(Exception):
    pass


class NoRelaysError(TransportError):
    pass


class UnreachableError(TransportError):
    pass


class NameNotFoundError(TransportError):
    pass


class TransportKind(Enum):
    INCOGNITO = "incognito"
    ONION_SIM = "onion"
    DCNET_SIM = "dcnet"


class DnsCapability(Enum):
    IN_TRANSPORT = "in-transport"   # resolver built into the circuit
    UDP_REDIRECT = "udp-redirect"   # transport forwards UDP natively
    NONE = "none"                   # engine must convert DNS to TCP framing


_DNS_DEFAULT = {
    TransportKind.ONION_SIM: DnsCapability.IN_TRANSPORT,
    TransportKind.DCNET_SIM: DnsCapability.UDP_REDIRECT,
    TransportKind.INCOGNITO: DnsCapability.UDP_REDIRECT,
}


@dataclass(frozen=True)
class GuardSeed:
    seed: bytes

    def __post_init__(self):
        if len(self.seed) != 32:
            raise TransportError("guard seed must be 32 bytes")

    @classmethod
    def random(cls) -> "GuardSeed":
        return cls(os.urandom(32))


@dataclass
class CircuitState:
    entry_guard: str
    path: tuple
    established_at: float = 0.0


@dataclass
class Relay:
    relay_id: str
    flags: tuple = ()

    def can_exit(self) -> bool:
        return "exit" in self.flags


def parse_relay_directory(text: str) -> list:
    """One record per line: `<id> <comma-separated role flags>`."""
    relays = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        flags = tuple(parts[1].split(",")) if len(parts) > 1 else ()
        relays.append(Relay(parts[0], flags))
    return relays


@dataclass
class TransportConfig:
    cell_size: int = 512
    cell_header: int = 14          # usable payload per cell = 512 - 14 = 498
    dcnet_slot_size: int = 512
    resolver_host: Optional[str] = None

    @property
    def cell_payload(self) -> int:
        return self.cell_size - self.cell_header


@dataclass
class ProxyRequest:
    dest_addr: str
    dest_port: int = 80
    payload: bytes = b""


class NetworkView:
    """What a transport can see of the substrate: the DNS table, the set of
    reachable internet destinations and the NAT gateway's external address.
    The engine provides a live adapter; tests may pass this stub directly."""

    def __init__(self, dns_table: Optional[dict] = None,
                 gateway_addr: str = GATEWAY_EXTERNAL_ADDR):
        self.dns_table = dict(dns_table or {})
        self.gateway_addr = gateway_addr
        self.udp_frames_crossed = 0
        self.tcp_lookups = 0

    def resolve(self, name: str) -> str:
        if name in self.dns_table:
            return self.dns_table[name]
        raise NameNotFoundError(name)

    def host_known(self, addr: str) -> bool:
        return addr in self.dns_table.values() or addr in self.dns_table

    def note_udp_crossing(self) -> None:
        self.udp_frames_crossed += 1

    def note_tcp_lookup(self) -> None:
        self.tcp_lookups += 1


def _kdf(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def _relay_list_digest(relay_ids: list) -> bytes:
    return _kdf("\n".join(sorted(relay_ids)).encode("utf-8"))


def select_entry_guard(seed: Optional[GuardSeed], relays: list) -> str:
    """Deterministic guard choice: index = first 8 bytes of
    KDF(seed || canonical relay-list digest) mod |relays|."""
    relay_ids = sorted(r.relay_id if isinstance(r, Relay) else r for r in relays)
    if not relay_ids:
        raise NoRelaysError("empty relay list")
    if seed is None:
        seed = GuardSeed.random()
    digest = _kdf(seed.seed + _relay_list_digest(relay_ids))
    index = int.from_bytes(digest[:8], "big") % len(relay_ids)
    return relay_ids[index]


def _pick_distinct(seed: GuardSeed, relay_ids: list, exclude: set, label: str) -> str:
    candidates = [r for r in relay_ids if r not in exclude]
    digest = _kdf(seed.seed + label.encode() + _relay_list_digest(relay_ids))
    return candidates[int.from_bytes(digest[:8], "big") % len(candidates)]


class TransportInstance:
    def __init__(self, kind: TransportKind, nym_id: str, relays: list,
                 guard_seed: Optional[GuardSeed], config: TransportConfig,
                 network: Optional[NetworkView]):
        self.kind = kind
        self.nym_id = nym_id
        self.relays = list(relays)
        self.guard_seed = guard_seed
        self.config = config
        self.network = network or NetworkView()
        self.circuit: Optional[CircuitState] = None
        self.dns_capability = _DNS_DEFAULT[kind]
        self.compromised = False
        self.observed_gateway: Optional[str] = None
        self.wire_bytes_sent = 0
        self.started = True

    def relay_ids(self) -> list:
        return sorted(r.relay_id if isinstance(r, Relay) else r for r in self.relays)

    def dcnet_members(self) -> list:
        return self.relay_ids()

    def serialize_state(self) -> bytes:
        """Stable snapshot of anonymity-relevant state, for the instance
        independence checks."""
        return pickle.dumps({
            "kind": self.kind.value,
            "nym": self.nym_id,
            "circuit": (self.circuit.entry_guard, self.circuit.path)
            if self.circuit else None,
            "relays": self.relay_ids(),
            "seeded": self.guard_seed is not None,
        })

    def inject_compromise(self) -> None:
        # A compromised CommVM learns the host's public address -- and only
        # that instance does; nothing here touches the AnonVM side.
        self.compromised = True
        self.observed_gateway = self.network.gateway_addr

    def stop(self) -> None:
        self.started = False
        self.circuit = None


def start_transport(kind: TransportKind, nym_id: str, relays: list,
                    guard_seed: Optional[GuardSeed] = None,
                    config: Optional[TransportConfig] = None,
                    network: Optional[NetworkView] = None) -> TransportInstance:
    config = config or TransportConfig()
    if kind is TransportKind.ONION_SIM:
        ids = sorted(r.relay_id if isinstance(r, Relay) else r for r in relays)
        if not ids:
            raise NoRelaysError("onion transport needs relays")
        if len(ids) < 3:
            raise NoRelaysError(f"onion circuit needs 3 distinct relays, got {len(ids)}")
        seed = guard_seed or GuardSeed.random()
        guard = select_entry_guard(seed, ids)
        middle = _pick_distinct(seed, ids, {guard}, "middle")
        exit_relay = _pick_distinct(seed, ids, {guard, middle}, "exit")
        instance = TransportInstance(kind, nym_id, relays, guard_seed, config, network)
        instance.circuit = CircuitState(entry_guard=guard, path=(guard, middle, exit_relay))
        return instance
    if kind is TransportKind.DCNET_SIM:
        if not relays:
            raise NoRelaysError("dcnet transport needs member relays")
        return TransportInstance(kind, nym_id, relays, guard_seed, config, network)
    return TransportInstance(kind, nym_id, [], guard_seed, config, network)


class StreamHandle:
    """Bidirectional stream through a transport instance. Counts the wire
    bytes the transport emits so overhead is measurable, and exposes the
    source identity the destination observes."""

    def __init__(self, instance: TransportInstance, dest_addr: str, dest_port: int):
        self.instance = instance
        self.dest_addr = dest_addr
        self.dest_port = dest_port
        self.observed_source = _observed_source(instance)
        self.open = True
        self.bytes_carried = 0

    def send(self, data: bytes) -> int:
        if not self.open:
            raise TransportError("stream closed")
        wire = _wire_bytes(self.instance, len(data))
        self.instance.wire_bytes_sent += wire
        self.bytes_carried += len(data)
        return wire

    def transfer(self, data: bytes) -> bytes:
        """Carry a payload end-to-end (used for archive upload/download)."""
        self.send(data)
        return data

    def close(self) -> None:
        self.open = False


def _observed_source(instance: TransportInstance) -> str:
    if instance.kind is TransportKind.ONION_SIM:
        return instance.circuit.path[-1]
    if instance.kind is TransportKind.DCNET_SIM:
        members = _relay_list_digest(instance.dcnet_members())
        return f"dcnet:{members.hex()[:8]}"
    return instance.network.gateway_addr


def _wire_bytes(instance: TransportInstance, payload_len: int) -> int:
    """Frame a payload of the given size and count emitted bytes."""
    cfg = instance.config
    if instance.kind is TransportKind.ONION_SIM:
        total = 0
        remaining = payload_len
        while remaining > 0:
            total += cfg.cell_size
            remaining -= cfg.cell_payload
        return total
    if instance.kind is TransportKind.DCNET_SIM:
        members = len(instance.dcnet_members())
        total = 0
        remaining = payload_len
        while remaining > 0:
            total += members * cfg.dcnet_slot_size  # every member transmits
            remaining -= cfg.dcnet_slot_size
        return total
    return payload_len


def proxy_connect(instance: TransportInstance, request: ProxyRequest) -> StreamHandle:
    if not instance.started:
        raise TransportError("transport not started")
    if not instance.network.host_known(request.dest_addr):
        raise UnreachableError(request.dest_addr)
    stream = StreamHandle(instance, request.dest_addr, request.dest_port)
    if request.payload:
        stream.send(request.payload)
    return stream


def resolve_dns(instance: TransportInstance, name: str) -> str:
    """Resolve a name the way the hosted anonymizer would.

    In-transport resolvers answer inside the circuit (no UDP crosses the
    NAT); UDP-capable transports redirect the query natively; a transport
    with neither capability gets the query converted to a TCP-framed
    lookup before transmission.
    """
    network = instance.network
    if instance.dns_capability is DnsCapability.IN_TRANSPORT:
        return network.resolve(name)
    if instance.dns_capability is DnsCapability.UDP_REDIRECT:
        network.note_udp_crossing()
        return network.resolve(name)
    return _tcp_framed_lookup(instance, name)


def _tcp_framed_lookup(instance: TransportInstance, name: str) -> str:
    # Length-prefixed query carried as ordinary stream traffic.
    resolver = instance.config.resolver_host or "resolver"
    query = len(name).to_bytes(2, "big") + name.encode("utf-8")
    addr = instance.network.resolve(name)  # resolver answers or raises
    stream = StreamHandle(instance, resolver, 53)
    stream.send(query)
    instance.network.note_tcp_lookup()
    return addr


def measure_overhead(instance: TransportInstance, payload_bytes: int) -> float:
    """wire bytes / payload bytes for one payload pushed through the framing."""
    if payload_bytes <= 0:
        raise TransportError("payload must be positive")
    return _wire_bytes(instance, payload_bytes) / payload_bytes
