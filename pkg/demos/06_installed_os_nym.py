"""Walkthrough: booting the machine's installed OS as a (non-anonymous) nym.

The physical disk stays read-only behind a block-level COW. Windows images
installed on bare metal need the modeled repair pass first; whatever the
session does, the Discard policy leaves the disk bit-identical.
"""

from nymkit.ctl import build_engine
from nymkit.hostnym import (
    DriverMismatchError,
    DriverProfile,
    OsLabel,
    PersistenceChoice,
    StaleBaseError,
    make_host_disk,
)

engine = build_engine(local_store="/tmp/nymkit-demo-store")

print("== Linux boots as-is; bare-metal Windows complains ==")
linux = make_host_disk(OsLabel.LINUX, DriverProfile.VIRTUAL)
win7 = make_host_disk(OsLabel.WINDOWS_7)  # bare metal
nym = engine.boot_installed_os(linux)
print("  linux booted as", nym.nym_id)
engine.terminate_nym(nym)
try:
    engine.boot_installed_os(win7)
except DriverMismatchError as exc:
    print("  windows7:", exc)

print("\n== the repair pass patches drivers inside the COW only ==")
repaired = engine.repair_host_disk(win7)
nym = engine.boot_installed_os(repaired)
print("  repaired windows7 booted as", nym.nym_id,
      "| repair deltas recorded:", engine.collector.repair_deltas)
engine.terminate_nym(nym)
print("  physical disk untouched:",
      win7.digest() == make_host_disk(OsLabel.WINDOWS_7).digest())

print("\n== deniability: Discard sessions leave no trace ==")
digest_before = linux.digest()
for _ in range(3):
    nym = engine.boot_installed_os(linux)
    nym.host.cow.write_block(4, b"evidence of this session")
    engine.terminate_nym(nym)  # default policy: Discard
print("  3 sessions later, disk digest unchanged:",
      linux.digest() == digest_before)

print("\n== StoreCow keeps session deltas, but binds them to the disk ==")
nym = engine.boot_installed_os(linux)
nym.host.cow.write_block(2, b"wifi credentials cache")
engine.set_persistence_policy(nym, PersistenceChoice.STORE_COW)
engine.store_cow(nym, "host-cow", "pw", "local")
engine.terminate_nym(nym)
restored = engine.restore_cow("host-cow", "pw", "local", linux)
print("  restored block 2:", restored.read_block(2)[:22])
other_disk = make_host_disk(OsLabel.LINUX, DriverProfile.VIRTUAL, seed=99)
try:
    engine.restore_cow("host-cow", "pw", "local", other_disk)
except StaleBaseError as exc:
    print("  restore over a changed disk:", exc)
