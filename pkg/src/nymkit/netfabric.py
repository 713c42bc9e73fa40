"""Simulated network substrate enforcing the nymbox isolation topology.

Nodes are typed (AnonVM, CommVM, SaniVM, hypervisor, NAT gateway, internet
and LAN hosts); reachability is structural — a frame is delivered only when
an explicit wire or an implicit same-segment rule carries it — plus two
policy points mirroring the real enforcement: the NAT gateway only forwards
CommVM egress to internet hosts, and the hypervisor's LAN uplink is
firewalled down to DHCP traffic. Everything else drops silently, as if the
destination did not exist.

probe_isolation() sweeps every ordered (src, dst) pair under both protocols
and reports any delivery that falls outside the expected reachability
matrix, which it computes independently of the structural walk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class NetfabricError(Exception):
    pass


class DuplicateNymError(NetfabricError):
    pass


class UnknownNodeError(NetfabricError):
    pass


class NoUplinkError(NetfabricError):
    pass


class NodeKind(Enum):
    ANON_VM = "anonvm"
    COMM_VM = "commvm"
    SANI_VM = "sanivm"
    HYPERVISOR = "hypervisor"
    NAT_GATEWAY = "nat"
    INTERNET_HOST = "internet"
    LAN_HOST = "lan"


_NYM_KINDS = {NodeKind.ANON_VM, NodeKind.COMM_VM}
_NEVER_NYM_KINDS = {NodeKind.SANI_VM, NodeKind.HYPERVISOR}


@dataclass(frozen=True)
class NodeId:
    kind: NodeKind
    nym_id: Optional[str] = None
    label: str = ""

    def __post_init__(self):
        if self.kind in _NYM_KINDS and not self.nym_id:
            raise NetfabricError(f"{self.kind.value} node requires a nym_id")
        if self.kind in _NEVER_NYM_KINDS and self.nym_id:
            raise NetfabricError(f"{self.kind.value} node must not carry a nym_id")

    def short(self) -> str:
        if self.nym_id:
            return f"{self.kind.value}({self.nym_id})"
        return f"{self.kind.value}({self.label})" if self.label else self.kind.value


@dataclass
class Frame:
    src: NodeId
    dst: NodeId
    proto: str  # "tcp" | "udp"
    src_addr: str
    dst_addr: str
    src_mac: str
    payload: bytes = b""


@dataclass(frozen=True)
class VmIdentity:
    """Fingerprint-uniform VM configuration, identical for every nym."""

    mac: str = "52:54:00:12:34:56"
    anon_ip: str = "10.0.2.15"
    comm_ip: str = "10.0.2.2"
    resolution: tuple = (1024, 768)
    cpu_label: str = "QEMU Virtual CPU"
    cpu_count: int = 1


_UNIFORM_IDENTITY = VmIdentity()

GATEWAY_EXTERNAL_ADDR = "198.51.100.1"
GATEWAY_MAC = "52:54:00:aa:00:01"
HYPERVISOR_ADDR = "192.168.1.2"
DHCP_TAG = b"DHCP"


def uniform_vm_identity(nym_id: str) -> VmIdentity:
    """Identity tuple used by every AnonVM/CommVM pair, independent of nym."""
    return _UNIFORM_IDENTITY


class Outcome(Enum):
    DELIVERED = "delivered"
    DROPPED = "dropped"


def node_addr(node: NodeId) -> str:
    if node.kind is NodeKind.ANON_VM:
        return _UNIFORM_IDENTITY.anon_ip
    if node.kind is NodeKind.COMM_VM:
        return _UNIFORM_IDENTITY.comm_ip
    if node.kind is NodeKind.NAT_GATEWAY:
        return GATEWAY_EXTERNAL_ADDR
    if node.kind is NodeKind.HYPERVISOR:
        return HYPERVISOR_ADDR
    if node.kind is NodeKind.INTERNET_HOST:
        return node.label or "203.0.113.9"
    if node.kind is NodeKind.LAN_HOST:
        return node.label or "192.168.1.50"
    return "0.0.0.0"


@dataclass
class Topology:
    nodes: set = field(default_factory=set)
    wires: set = field(default_factory=set)  # frozenset({a, b}) edges
    nat_bindings: dict = field(default_factory=dict)
    hypervisor_uplink: Optional[frozenset] = None
    _next_binding: int = 0

    def add_node(self, node: NodeId) -> NodeId:
        self.nodes.add(node)
        return node

    def add_wire(self, a: NodeId, b: NodeId) -> None:
        if a not in self.nodes or b not in self.nodes:
            raise UnknownNodeError("wire endpoint not in topology")
        self.wires.add(frozenset((a, b)))

    def has_wire(self, a: NodeId, b: NodeId) -> bool:
        return frozenset((a, b)) in self.wires

    def gateway(self) -> Optional[NodeId]:
        for node in self.nodes:
            if node.kind is NodeKind.NAT_GATEWAY:
                return node
        return None

    def hypervisor(self) -> Optional[NodeId]:
        for node in self.nodes:
            if node.kind is NodeKind.HYPERVISOR:
                return node
        return None

    def node_of(self, kind: NodeKind, nym_id: str) -> Optional[NodeId]:
        for node in self.nodes:
            if node.kind is kind and node.nym_id == nym_id:
                return node
        return None

    def anon_of(self, nym_id: str) -> Optional[NodeId]:
        return self.node_of(NodeKind.ANON_VM, nym_id)

    def comm_of(self, nym_id: str) -> Optional[NodeId]:
        return self.node_of(NodeKind.COMM_VM, nym_id)

    def nym_ids(self) -> set:
        return {n.nym_id for n in self.nodes if n.nym_id}

    def remove_nym(self, nym_id: str) -> None:
        gone = {n for n in self.nodes if n.nym_id == nym_id}
        self.nodes -= gone
        self.wires = {w for w in self.wires if not (w & gone)}
        self.nat_bindings = {k: v for k, v in self.nat_bindings.items()
                             if v["comm"] not in gone}

    def internet_hosts(self) -> list:
        return sorted((n for n in self.nodes if n.kind is NodeKind.INTERNET_HOST),
                      key=lambda n: n.label)


def base_topology(internet_hosts: tuple = ("203.0.113.10",),
                  lan_hosts: tuple = ("192.168.1.50",)) -> Topology:
    """Hypervisor + NAT + SaniVM + hosts; nymboxes are added on top."""
    topo = Topology()
    hyp = topo.add_node(NodeId(NodeKind.HYPERVISOR))
    topo.add_node(NodeId(NodeKind.NAT_GATEWAY))
    topo.add_node(NodeId(NodeKind.SANI_VM))
    gateway = topo.gateway()
    for addr in internet_hosts:
        host = topo.add_node(NodeId(NodeKind.INTERNET_HOST, label=addr))
        topo.add_wire(gateway, host)
    for addr in lan_hosts:
        lan = topo.add_node(NodeId(NodeKind.LAN_HOST, label=addr))
        # The hypervisor's physical NIC; firewalled to DHCP in send().
        topo.add_wire(hyp, lan)
        topo.hypervisor_uplink = frozenset((hyp, lan))
    return topo


def build_nymbox_topology(nym_id: str, topology: Topology) -> Topology:
    """Add one nymbox: AnonVM, CommVM, their wire, and the CommVM NAT uplink."""
    if nym_id in topology.nym_ids():
        raise DuplicateNymError(nym_id)
    gateway = topology.gateway()
    if gateway is None:
        raise NetfabricError("topology has no NAT gateway")
    anon = topology.add_node(NodeId(NodeKind.ANON_VM, nym_id=nym_id))
    comm = topology.add_node(NodeId(NodeKind.COMM_VM, nym_id=nym_id))
    topology.add_wire(anon, comm)
    topology.add_wire(comm, gateway)
    return topology


def _is_dhcp(frame: Frame) -> bool:
    return frame.proto == "udp" and frame.payload.startswith(DHCP_TAG)


def send(topology: Topology, frame: Frame) -> Outcome:
    """Deliver one frame or drop it silently (no response frame either way)."""
    src, dst = frame.src, frame.dst
    if src not in topology.nodes:
        raise UnknownNodeError(src.short())
    if dst not in topology.nodes or src == dst:
        return Outcome.DROPPED

    # AnonVM egress must carry the uniform in-nym identity, never host values.
    if src.kind is NodeKind.ANON_VM:
        ident = uniform_vm_identity(src.nym_id)
        if frame.src_addr != ident.anon_ip or frame.src_mac != ident.mac:
            return Outcome.DROPPED

    edge = frozenset((src, dst))

    # Hypervisor egress: DHCP over its firewalled uplink only.
    if src.kind is NodeKind.HYPERVISOR:
        if edge == topology.hypervisor_uplink and _is_dhcp(frame):
            return Outcome.DELIVERED
        return Outcome.DROPPED
    # Inbound across the firewalled uplink: DHCP replies only.
    if edge == topology.hypervisor_uplink:
        return Outcome.DELIVERED if _is_dhcp(frame) else Outcome.DROPPED

    # NAT gateway is transit, not a host: frames addressed to it are either
    # replies on a recorded binding (forwarded to the bound CommVM) or dropped.
    if dst.kind is NodeKind.NAT_GATEWAY:
        if src.kind is NodeKind.INTERNET_HOST and _reply_binding(topology, frame):
            return Outcome.DELIVERED
        return Outcome.DROPPED
    # As a source the gateway only emits translated egress toward the Internet;
    # reply legs toward CommVMs ride the binding rule above.
    if src.kind is NodeKind.NAT_GATEWAY:
        if dst.kind is NodeKind.INTERNET_HOST and edge in topology.wires:
            return Outcome.DELIVERED
        return Outcome.DROPPED

    # Direct point-to-point wire (AnonVM-CommVM pairs; also any injected
    # rogue edge — structural delivery is what probe_isolation audits).
    if edge in topology.wires:
        return Outcome.DELIVERED

    # CommVM to the Internet through its NAT uplink.
    if src.kind is NodeKind.COMM_VM and dst.kind is NodeKind.INTERNET_HOST:
        gateway = topology.gateway()
        if gateway and topology.has_wire(src, gateway):
            return Outcome.DELIVERED
        return Outcome.DROPPED

    # Same public segment: the Internet routes among itself, the LAN likewise.
    if src.kind is dst.kind and src.kind in (NodeKind.INTERNET_HOST, NodeKind.LAN_HOST):
        return Outcome.DELIVERED

    return Outcome.DROPPED


def nat_translate(topology: Topology, frame: Frame) -> Frame:
    """Rewrite CommVM egress to the gateway's external identity, recording
    the binding so the reverse flow can be delivered."""
    if frame.src.kind is not NodeKind.COMM_VM:
        raise NoUplinkError("only CommVM frames are NAT-translated")
    gateway = topology.gateway()
    if gateway is None or not topology.has_wire(frame.src, gateway):
        raise NoUplinkError(frame.src.short())
    key = (frame.src, frame.dst_addr, frame.proto)
    if key not in topology.nat_bindings:
        topology._next_binding += 1
        topology.nat_bindings[key] = {
            "comm": frame.src,
            "external_id": topology._next_binding,
            "dst_addr": frame.dst_addr,
            "proto": frame.proto,
        }
    return Frame(
        src=gateway,
        dst=frame.dst,
        proto=frame.proto,
        src_addr=GATEWAY_EXTERNAL_ADDR,
        dst_addr=frame.dst_addr,
        src_mac=GATEWAY_MAC,
        payload=frame.payload,
    )


def _reply_binding(topology: Topology, frame: Frame) -> Optional[NodeId]:
    for binding in topology.nat_bindings.values():
        if binding["dst_addr"] == frame.src_addr and binding["proto"] == frame.proto:
            return binding["comm"]
    return None


def deliver_reply(topology: Topology, frame: Frame) -> Optional[NodeId]:
    """Reverse-NAT an inbound frame; returns the bound CommVM or None."""
    if frame.dst_addr != GATEWAY_EXTERNAL_ADDR:
        return None
    return _reply_binding(topology, frame)


def expected_reachable(topology: Topology, src: NodeId, dst: NodeId, proto: str) -> bool:
    """The declarative reachability matrix for generic (non-DHCP) traffic.

    Kept separate from send()'s structural walk so probe_isolation compares
    two routes to the same answer.
    """
    if src == dst:
        return False
    if src.kind is NodeKind.ANON_VM and dst.kind is NodeKind.COMM_VM:
        return src.nym_id == dst.nym_id
    if src.kind is NodeKind.COMM_VM and dst.kind is NodeKind.ANON_VM:
        return src.nym_id == dst.nym_id
    if src.kind is NodeKind.COMM_VM and dst.kind is NodeKind.INTERNET_HOST:
        gateway = topology.gateway()
        return bool(gateway and topology.has_wire(src, gateway))
    if src.kind is NodeKind.NAT_GATEWAY and dst.kind is NodeKind.INTERNET_HOST:
        return topology.has_wire(src, dst)
    if src.kind is NodeKind.INTERNET_HOST and dst.kind is NodeKind.NAT_GATEWAY:
        return any(b["dst_addr"] == node_addr(src) and b["proto"] == proto
                   for b in topology.nat_bindings.values())
    if src.kind is dst.kind and src.kind in (NodeKind.INTERNET_HOST, NodeKind.LAN_HOST):
        return True
    return False


@dataclass
class LeakReport:
    attempted: list
    delivered: list
    violations: list

    def to_ldjson(self) -> str:
        lines = []
        delivered = set(self.delivered)
        for src, dst, proto in self.attempted:
            outcome = "delivered" if (src, dst, proto) in delivered else "dropped"
            lines.append(json.dumps({
                "src": src.short(), "dst": dst.short(),
                "proto": proto, "outcome": outcome,
            }, sort_keys=True))
        return "\n".join(lines)

    def summary(self) -> str:
        return (f"{len(self.attempted)} attempts, {len(self.delivered)} delivered, "
                f"{len(self.violations)} violations")


def probe_isolation(topology: Topology) -> LeakReport:
    """Attempt every ordered (src, dst) pair under tcp and udp and flag any
    delivery outside the expected matrix."""
    nodes = sorted(topology.nodes, key=lambda n: (n.kind.value, n.nym_id or "", n.label))
    attempted, delivered, violations = [], [], []
    for src in nodes:
        for dst in nodes:
            if src == dst:
                continue
            for proto in ("tcp", "udp"):
                attempted.append((src, dst, proto))
                ident = uniform_vm_identity(src.nym_id) if src.nym_id else None
                frame = Frame(
                    src=src, dst=dst, proto=proto,
                    src_addr=(ident.anon_ip if src.kind is NodeKind.ANON_VM
                              else node_addr(src)),
                    dst_addr=node_addr(dst),
                    src_mac=(ident.mac if ident else "52:54:00:00:00:00"),
                    payload=b"probe",
                )
                if send(topology, frame) is Outcome.DELIVERED:
                    delivered.append((src, dst, proto))
                    if not expected_reachable(topology, src, dst, proto):
                        violations.append((src, dst, proto))
    return LeakReport(attempted=attempted, delivered=delivered, violations=violations)
