"""Walkthrough: the three pluggable anonymizers and what each one costs.

Incognito is plain NAT (no anonymity, no overhead); the onion simulator
wraps traffic in fixed 512-byte cells through a guard/middle/exit circuit;
the DC-net simulator makes every member transmit every round.
"""

from nymkit.snapstore import derive_guard_seed
from nymkit.transports import (
    GuardSeed,
    NetworkView,
    ProxyRequest,
    TransportKind,
    measure_overhead,
    proxy_connect,
    select_entry_guard,
    start_transport,
)

RELAYS = [f"relay-{i:02d}" for i in range(1, 11)]
NET = {"example.org": "203.0.113.10"}


def view():
    return NetworkView(dns_table=NET)


print("== entry guards are a deterministic function of the guard seed ==")
seed = derive_guard_seed("mockcloud:cloudbox/my-nym", "correct horse battery")
print("seed bytes      ->", seed.seed.hex()[:24], "...")
print("guard, 3 calls  ->", [select_entry_guard(seed, RELAYS) for _ in range(3)])
print("random seed     ->", select_entry_guard(GuardSeed.random(), RELAYS))

print("\n== what the destination observes ==")
for kind in TransportKind:
    relays = [] if kind is TransportKind.INCOGNITO else RELAYS
    instance = start_transport(kind, "demo", relays, seed, network=view())
    stream = proxy_connect(instance, ProxyRequest("203.0.113.10", 80))
    print(f"  {kind.value:10} -> destination sees {stream.observed_source}")

print("\n== wire overhead for a 1 MB payload ==")
for kind in TransportKind:
    relays = [] if kind is TransportKind.INCOGNITO else RELAYS
    instance = start_transport(kind, "demo", relays, seed, network=view())
    ratio = measure_overhead(instance, 1_000_000)
    print(f"  {kind.value:10} ratio {ratio:8.4f}")

print("\n== DNS strategies ==")
from nymkit.transports import DnsCapability, resolve_dns

onion = start_transport(TransportKind.ONION_SIM, "demo", RELAYS, seed,
                        network=view())
print("  onion: resolved", resolve_dns(onion, "example.org"),
      "in-circuit; UDP frames crossing NAT:", onion.network.udp_frames_crossed)

dcnet = start_transport(TransportKind.DCNET_SIM, "demo", RELAYS, network=view())
print("  dcnet: resolved", resolve_dns(dcnet, "example.org"),
      "via UDP redirection; crossings:", dcnet.network.udp_frames_crossed)

stub = start_transport(TransportKind.INCOGNITO, "demo", [], network=view())
stub.dns_capability = DnsCapability.NONE  # a transport with neither mode
print("  stub : resolved", resolve_dns(stub, "example.org"),
      "after TCP conversion; TCP lookups:", stub.network.tcp_lookups)
