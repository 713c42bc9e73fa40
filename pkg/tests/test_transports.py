import math
import random
from collections import Counter

import pytest

from nymkit.transports import (
    DnsCapability,
    GuardSeed,
    NameNotFoundError,
    NetworkView,
    NoRelaysError,
    ProxyRequest,
    Relay,
    TransportConfig,
    TransportKind,
    UnreachableError,
    measure_overhead,
    parse_relay_directory,
    proxy_connect,
    resolve_dns,
    select_entry_guard,
    start_transport,
)

RELAYS = [f"relay-{i:02d}" for i in range(1, 11)]
DNS = {"example.org": "203.0.113.10", "cloud.example": "203.0.113.20"}


def network():
    return NetworkView(dns_table=DNS)


def seed_from(n: int) -> GuardSeed:
    return GuardSeed(n.to_bytes(32, "big"))


class TestGuardSelection:
    def test_deterministic(self):
        seed = seed_from(99)
        assert select_entry_guard(seed, RELAYS) == select_entry_guard(seed, RELAYS)

    def test_single_relay(self):
        for n in range(5):
            assert select_entry_guard(seed_from(n), ["only"]) == "only"

    def test_empty_relays(self):
        with pytest.raises(NoRelaysError):
            select_entry_guard(seed_from(1), [])

    def test_relay_order_irrelevant(self):
        seed = seed_from(5)
        shuffled = list(RELAYS)
        random.Random(0).shuffle(shuffled)
        assert select_entry_guard(seed, RELAYS) == select_entry_guard(seed, shuffled)

    def test_uniform_spread(self):
        # Monte-Carlo: 10,000 random seeds over 10 relays; every relay picked
        # within 10% +/- 1.5% of trials.
        rng = random.Random(2024)
        counts = Counter()
        trials = 10_000
        for _ in range(trials):
            counts[select_entry_guard(GuardSeed(rng.randbytes(32)), RELAYS)] += 1
        for relay in RELAYS:
            assert abs(counts[relay] / trials - 0.10) <= 0.015

    def test_accepts_relay_objects(self):
        relays = [Relay(r, ("guard",)) for r in RELAYS]
        assert select_entry_guard(seed_from(3), relays) == \
            select_entry_guard(seed_from(3), RELAYS)


class TestStartTransport:
    def test_incognito_needs_no_relays(self):
        instance = start_transport(TransportKind.INCOGNITO, "nym1", [])
        assert instance.circuit is None

    def test_onion_seeded_guard_matches_select(self):
        seed = seed_from(7)
        instance = start_transport(TransportKind.ONION_SIM, "nym1", RELAYS, seed)
        assert instance.circuit.entry_guard == select_entry_guard(seed, RELAYS)
        assert instance.circuit.path[0] == instance.circuit.entry_guard

    def test_onion_path_three_distinct(self):
        instance = start_transport(TransportKind.ONION_SIM, "nym1", RELAYS,
                                   seed_from(1))
        assert len(instance.circuit.path) == 3
        assert len(set(instance.circuit.path)) == 3

    def test_onion_empty_relays(self):
        with pytest.raises(NoRelaysError):
            start_transport(TransportKind.ONION_SIM, "nym1", [])

    def test_onion_too_few_relays(self):
        with pytest.raises(NoRelaysError):
            start_transport(TransportKind.ONION_SIM, "nym1", RELAYS[:2])

    def test_dcnet_empty_relays(self):
        with pytest.raises(NoRelaysError):
            start_transport(TransportKind.DCNET_SIM, "nym1", [])

    def test_seeded_circuit_reproducible(self):
        a = start_transport(TransportKind.ONION_SIM, "nym1", RELAYS, seed_from(42))
        b = start_transport(TransportKind.ONION_SIM, "nym2", RELAYS, seed_from(42))
        assert a.circuit.path == b.circuit.path


class TestProxyConnect:
    def test_incognito_observed_source_is_gateway(self):
        instance = start_transport(TransportKind.INCOGNITO, "nym1", [],
                                   network=network())
        stream = proxy_connect(instance, ProxyRequest("203.0.113.10"))
        assert stream.observed_source == instance.network.gateway_addr

    def test_onion_observed_source_is_exit(self):
        instance = start_transport(TransportKind.ONION_SIM, "nym1", RELAYS,
                                   seed_from(1), network=network())
        stream = proxy_connect(instance, ProxyRequest("203.0.113.10"))
        assert stream.observed_source == instance.circuit.path[-1]
        assert stream.observed_source != instance.network.gateway_addr

    def test_dcnet_observed_source_never_gateway(self):
        instance = start_transport(TransportKind.DCNET_SIM, "nym1", RELAYS,
                                   network=network())
        stream = proxy_connect(instance, ProxyRequest("203.0.113.10"))
        assert stream.observed_source != instance.network.gateway_addr

    def test_unknown_destination(self):
        instance = start_transport(TransportKind.INCOGNITO, "nym1", [],
                                   network=network())
        with pytest.raises(UnreachableError):
            proxy_connect(instance, ProxyRequest("198.18.0.1"))


class TestDns:
    def test_onion_resolves_in_transport(self):
        net = network()
        instance = start_transport(TransportKind.ONION_SIM, "nym1", RELAYS,
                                   seed_from(1), network=net)
        assert resolve_dns(instance, "example.org") == "203.0.113.10"
        assert net.udp_frames_crossed == 0

    def test_dcnet_resolves_via_udp(self):
        net = network()
        instance = start_transport(TransportKind.DCNET_SIM, "nym1", RELAYS,
                                   network=net)
        assert resolve_dns(instance, "example.org") == "203.0.113.10"
        assert net.udp_frames_crossed == 1

    def test_stub_transport_uses_tcp_conversion(self):
        net = network()
        instance = start_transport(TransportKind.INCOGNITO, "nym1", [], network=net)
        instance.dns_capability = DnsCapability.NONE  # neither mode supported
        assert resolve_dns(instance, "example.org") == "203.0.113.10"
        assert net.udp_frames_crossed == 0
        assert net.tcp_lookups == 1
        assert instance.wire_bytes_sent > 0

    def test_unknown_name(self):
        instance = start_transport(TransportKind.INCOGNITO, "nym1", [],
                                   network=network())
        with pytest.raises(NameNotFoundError):
            resolve_dns(instance, "nope.invalid")


class TestOverhead:
    def test_incognito_is_one(self):
        instance = start_transport(TransportKind.INCOGNITO, "nym1", [])
        for n in (1, 100, 10_000):
            assert measure_overhead(instance, n) == 1.0

    def test_onion_matches_analytic_cell_formula(self):
        # independent oracle: ceil(N / usable) * cell / N
        instance = start_transport(TransportKind.ONION_SIM, "nym1", RELAYS,
                                   seed_from(1))
        cell, usable = 512, 512 - 14
        for n in (1, 497, 498, 499, 498_000, 1_000_000):
            expected = math.ceil(n / usable) * cell / n
            assert abs(measure_overhead(instance, n) - expected) < 1e-6

    def test_onion_reference_value(self):
        instance = start_transport(TransportKind.ONION_SIM, "nym1", RELAYS,
                                   seed_from(1))
        ratio = measure_overhead(instance, 498_000)
        assert abs(ratio - 512_000 / 498_000) < 1e-9
        assert abs(ratio - 1.0281) < 1e-4

    def test_dcnet_ratio_at_least_members(self):
        # every byte is transmitted by every member per broadcast round
        instance = start_transport(TransportKind.DCNET_SIM, "nym1", RELAYS)
        members = len(instance.dcnet_members())
        for n in (1, 512, 513, 100_000):
            slot = instance.config.dcnet_slot_size
            expected = members * math.ceil(n / slot) * slot / n
            ratio = measure_overhead(instance, n)
            assert ratio >= members
            assert abs(ratio - expected) < 1e-6


class TestIndependenceAndCompromise:
    def test_instances_do_not_share_state(self):
        a = start_transport(TransportKind.ONION_SIM, "nym1", RELAYS, seed_from(1),
                            network=network())
        b = start_transport(TransportKind.ONION_SIM, "nym2", RELAYS, seed_from(2),
                            network=network())
        before = b.serialize_state()
        a.inject_compromise()
        a.stop()
        assert b.serialize_state() == before

    def test_compromise_exposes_gateway_to_that_instance_only(self):
        net = network()
        a = start_transport(TransportKind.ONION_SIM, "nym1", RELAYS, seed_from(1),
                            network=net)
        b = start_transport(TransportKind.ONION_SIM, "nym2", RELAYS, seed_from(2),
                            network=network())
        assert a.observed_gateway is None
        a.inject_compromise()
        assert a.observed_gateway == net.gateway_addr
        assert b.observed_gateway is None


class TestRelayDirectory:
    def test_parse(self):
        text = "# directory\nrelay-a guard,exit\nrelay-b guard\n\nrelay-c\n"
        relays = parse_relay_directory(text)
        assert [r.relay_id for r in relays] == ["relay-a", "relay-b", "relay-c"]
        assert relays[0].can_exit() and not relays[1].can_exit()
