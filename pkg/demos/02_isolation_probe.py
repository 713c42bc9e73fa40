"""Walkthrough: the isolation topology and the exhaustive reachability probe.

Every nym gets an AnonVM wired only to its own CommVM, which reaches the
Internet only through the NAT gateway. The probe attempts every ordered
(src, dst, proto) pair and flags anything outside the expected matrix.
"""

from nymkit import netfabric
from nymkit.ctl import build_engine
from nymkit.nymcore import NymMode
from nymkit.transports import TransportKind

engine = build_engine(local_store="/tmp/nymkit-demo-store")
for _ in range(3):
    engine.create_nym(NymMode.EPHEMERAL, TransportKind.INCOGNITO)

report = engine.probe()
print("nodes:", len(engine.topology.nodes), "| probe:", report.summary())

print("\nwhat actually got delivered:")
for src, dst, proto in report.delivered[:8]:
    print(f"  {src.short():22} -> {dst.short():22} [{proto}]")
print(f"  ... {len(report.delivered) - 8} more")

print("\nevery AnonVM presents the identical fingerprint-uniform identity:")
ident = netfabric.uniform_vm_identity("whoever")
print(f"  mac={ident.mac} ip={ident.anon_ip} "
      f"res={ident.resolution[0]}x{ident.resolution[1]} "
      f"cpu='{ident.cpu_label}' x{ident.cpu_count}")

print("\ninjecting a rogue wire between two AnonVMs (a fault)...")
topo = engine.topology
topo.add_wire(topo.anon_of("nym-0001"), topo.anon_of("nym-0002"))
faulty = netfabric.probe_isolation(topo)
for src, dst, proto in faulty.violations:
    print(f"  VIOLATION: {src.short()} -> {dst.short()} [{proto}]")

print("\nfirst lines of the LD-JSON export:")
for line in faulty.to_ldjson().splitlines()[:3]:
    print(" ", line)
