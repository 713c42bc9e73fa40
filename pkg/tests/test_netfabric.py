import json

import pytest

from nymkit.netfabric import (
    DHCP_TAG,
    GATEWAY_EXTERNAL_ADDR,
    DuplicateNymError,
    Frame,
    NodeId,
    NodeKind,
    Outcome,
    UnknownNodeError,
    base_topology,
    build_nymbox_topology,
    deliver_reply,
    nat_translate,
    node_addr,
    probe_isolation,
    send,
    uniform_vm_identity,
    NoUplinkError,
)


def topo_with(n_nyms: int):
    topo = base_topology(internet_hosts=("203.0.113.10", "203.0.113.20"))
    for i in range(n_nyms):
        build_nymbox_topology(f"nym{i + 1}", topo)
    return topo


def frame(topo, src: NodeId, dst: NodeId, proto="tcp", payload=b"x"):
    ident = uniform_vm_identity(src.nym_id) if src.nym_id else None
    return Frame(
        src=src, dst=dst, proto=proto,
        src_addr=ident.anon_ip if src.kind is NodeKind.ANON_VM else node_addr(src),
        dst_addr=node_addr(dst),
        src_mac=ident.mac if ident else "52:54:00:00:00:99",
        payload=payload)


class TestTopologyBuild:
    def test_first_nym_adds_two_nodes_two_edges(self):
        topo = base_topology()
        nodes, wires = len(topo.nodes), len(topo.wires)
        build_nymbox_topology("nym1", topo)
        assert len(topo.nodes) == nodes + 2
        assert len(topo.wires) == wires + 2

    def test_no_cross_nym_edges(self):
        topo = topo_with(2)
        for wire in topo.wires:
            nyms = {n.nym_id for n in wire if n.nym_id}
            assert len(nyms) <= 1

    def test_duplicate_rejected(self):
        topo = topo_with(1)
        with pytest.raises(DuplicateNymError):
            build_nymbox_topology("nym1", topo)

    def test_node_id_invariants(self):
        with pytest.raises(Exception):
            NodeId(NodeKind.ANON_VM)  # needs nym_id
        with pytest.raises(Exception):
            NodeId(NodeKind.SANI_VM, nym_id="nym1")  # never carries one


class TestSend:
    def test_anon_to_own_comm(self):
        topo = topo_with(1)
        f = frame(topo, topo.anon_of("nym1"), topo.comm_of("nym1"))
        assert send(topo, f) is Outcome.DELIVERED

    def test_anon_to_other_anon_dropped(self):
        topo = topo_with(2)
        f = frame(topo, topo.anon_of("nym1"), topo.anon_of("nym2"))
        assert send(topo, f) is Outcome.DROPPED

    def test_comm_to_lan_dropped(self):
        topo = topo_with(1)
        lan = next(n for n in topo.nodes if n.kind is NodeKind.LAN_HOST)
        assert send(topo, frame(topo, topo.comm_of("nym1"), lan)) is Outcome.DROPPED

    def test_comm_to_internet_delivered(self):
        topo = topo_with(1)
        host = topo.internet_hosts()[0]
        assert send(topo, frame(topo, topo.comm_of("nym1"), host)) is Outcome.DELIVERED

    def test_anon_to_internet_dropped(self):
        topo = topo_with(1)
        host = topo.internet_hosts()[0]
        assert send(topo, frame(topo, topo.anon_of("nym1"), host)) is Outcome.DROPPED

    def test_nothing_reaches_hypervisor_or_sanivm(self):
        topo = topo_with(1)
        hyp = topo.hypervisor()
        sani = next(n for n in topo.nodes if n.kind is NodeKind.SANI_VM)
        for dst in (hyp, sani):
            for src in (topo.anon_of("nym1"), topo.comm_of("nym1")):
                assert send(topo, frame(topo, src, dst)) is Outcome.DROPPED

    def test_sanivm_reaches_nothing(self):
        topo = topo_with(1)
        sani = next(n for n in topo.nodes if n.kind is NodeKind.SANI_VM)
        for dst in topo.nodes - {sani}:
            assert send(topo, frame(topo, sani, dst)) is Outcome.DROPPED

    def test_unknown_src_raises(self):
        topo = topo_with(1)
        ghost = NodeId(NodeKind.ANON_VM, nym_id="ghost")
        with pytest.raises(UnknownNodeError):
            send(topo, frame(topo, ghost, topo.hypervisor()))

    def test_anonvm_nonuniform_identity_dropped(self):
        topo = topo_with(1)
        f = frame(topo, topo.anon_of("nym1"), topo.comm_of("nym1"))
        f.src_addr = "10.9.9.9"  # not the uniform in-nym address
        assert send(topo, f) is Outcome.DROPPED

    def test_hypervisor_dhcp_whitelist(self):
        topo = topo_with(1)
        hyp = topo.hypervisor()
        lan = next(n for n in topo.nodes if n.kind is NodeKind.LAN_HOST)
        dhcp = frame(topo, hyp, lan, proto="udp", payload=DHCP_TAG + b" discover")
        assert send(topo, dhcp) is Outcome.DELIVERED
        generic = frame(topo, hyp, lan, proto="udp", payload=b"other")
        assert send(topo, generic) is Outcome.DROPPED
        tcp_dhcp = frame(topo, hyp, lan, proto="tcp", payload=DHCP_TAG)
        assert send(topo, tcp_dhcp) is Outcome.DROPPED


class TestNat:
    def test_outbound_rewritten_to_gateway(self):
        topo = topo_with(1)
        host = topo.internet_hosts()[0]
        out = nat_translate(topo, frame(topo, topo.comm_of("nym1"), host))
        assert out.src_addr == GATEWAY_EXTERNAL_ADDR
        assert out.dst_addr == node_addr(host)

    def test_reply_on_binding_returns_to_comm(self):
        topo = topo_with(2)
        host = topo.internet_hosts()[0]
        nat_translate(topo, frame(topo, topo.comm_of("nym1"), host))
        reply = Frame(src=host, dst=topo.gateway(), proto="tcp",
                      src_addr=node_addr(host), dst_addr=GATEWAY_EXTERNAL_ADDR,
                      src_mac="aa", payload=b"resp")
        assert deliver_reply(topo, reply) == topo.comm_of("nym1")
        assert send(topo, reply) is Outcome.DELIVERED

    def test_reply_without_binding_dropped(self):
        topo = topo_with(1)
        host = topo.internet_hosts()[0]
        reply = Frame(src=host, dst=topo.gateway(), proto="tcp",
                      src_addr=node_addr(host), dst_addr=GATEWAY_EXTERNAL_ADDR,
                      src_mac="aa", payload=b"resp")
        assert deliver_reply(topo, reply) is None
        assert send(topo, reply) is Outcome.DROPPED

    def test_reply_binding_brute_force_over_states(self):
        # Oracle: enumerate every (flows-established) subset of comm/host
        # pairs and check reply delivery matches binding membership.
        topo = topo_with(2)
        hosts = topo.internet_hosts()
        pairs = [(topo.comm_of(f"nym{i + 1}"), host)
                 for i in range(2) for host in hosts]
        for mask in range(2 ** len(pairs)):
            topo.nat_bindings.clear()
            expected_sources = set()
            for bit, (comm, host) in enumerate(pairs):
                if mask & (1 << bit):
                    nat_translate(topo, frame(topo, comm, host, proto="udp"))
                    expected_sources.add(host)
            for host in hosts:
                reply = Frame(src=host, dst=topo.gateway(), proto="udp",
                              src_addr=node_addr(host),
                              dst_addr=GATEWAY_EXTERNAL_ADDR,
                              src_mac="aa", payload=b"r")
                outcome = send(topo, reply)
                assert (outcome is Outcome.DELIVERED) == (host in expected_sources)

    def test_bindings_never_shared_between_comms(self):
        topo = topo_with(3)
        host = topo.internet_hosts()[0]
        for i in range(3):
            nat_translate(topo, frame(topo, topo.comm_of(f"nym{i + 1}"), host))
        ids = [b["external_id"] for b in topo.nat_bindings.values()]
        comms = [b["comm"] for b in topo.nat_bindings.values()]
        assert len(set(ids)) == len(ids)
        assert len(set(comms)) == len(comms)

    def test_no_uplink(self):
        topo = topo_with(1)
        host = topo.internet_hosts()[0]
        with pytest.raises(NoUplinkError):
            nat_translate(topo, frame(topo, topo.anon_of("nym1"), host))


class TestUniformIdentity:
    def test_identical_across_nyms(self):
        assert uniform_vm_identity("nym1") == uniform_vm_identity("nym2")

    def test_values(self):
        ident = uniform_vm_identity("nym1")
        assert ident.resolution == (1024, 768)
        assert ident.cpu_label == "QEMU Virtual CPU"
        assert ident.cpu_count == 1
        assert ident.anon_ip != GATEWAY_EXTERNAL_ADDR
        assert ident.comm_ip != GATEWAY_EXTERNAL_ADDR
        assert ident.mac != "52:54:00:aa:00:01"


class TestProbe:
    def test_single_nym_clean(self):
        report = probe_isolation(topo_with(1))
        assert report.violations == []

    def test_rogue_edge_detected(self):
        topo = topo_with(2)
        topo.add_wire(topo.anon_of("nym1"), topo.anon_of("nym2"))
        report = probe_isolation(topo)
        pairs = {(s.short(), d.short()) for s, d, _ in report.violations}
        assert pairs == {("anonvm(nym1)", "anonvm(nym2)"),
                         ("anonvm(nym2)", "anonvm(nym1)")}

    def test_eight_nym_sweep_counts(self):
        topo = topo_with(8)
        report = probe_isolation(topo)
        n = len(topo.nodes)
        assert len(report.attempted) == n * (n - 1) * 2
        assert report.violations == []

    def test_ldjson_export(self):
        report = probe_isolation(topo_with(1))
        lines = report.to_ldjson().splitlines()
        assert len(lines) == len(report.attempted)
        record = json.loads(lines[0])
        assert set(record) == {"src", "dst", "proto", "outcome"}

    def test_delivered_anon_frames_use_uniform_identity(self):
        # every delivered frame with an AnonVM source was sent with the
        # uniform identity (send() enforces it; construct both ways)
        topo = topo_with(2)
        ident = uniform_vm_identity("nym1")
        good = frame(topo, topo.anon_of("nym1"), topo.comm_of("nym1"))
        assert good.src_addr == ident.anon_ip and good.src_mac == ident.mac
        assert send(topo, good) is Outcome.DELIVERED
        bad = frame(topo, topo.anon_of("nym1"), topo.comm_of("nym1"))
        bad.src_mac = "de:ad:be:ef:00:01"
        assert send(topo, bad) is Outcome.DROPPED
