"""Walkthrough: storing a nym to the (mock) cloud and restoring it.

The archive is compressed then encrypted with integrity; the upload rides
the nym's own transport, so the storage provider's access log only ever
sees the circuit's exit identity. Restoring derives the guard seed from
(storage location, password), so even the throwaway loader nym picks the
same entry guard.
"""

from nymkit.ctl import build_engine
from nymkit.nymcore import NymMode
from nymkit.transports import TransportKind

engine = build_engine(local_store="/tmp/nymkit-demo-store")
cloud = engine.get_backend("cloud")
cloud.login("pseudonymous-account", "cloud-secret")

print("== a session worth keeping ==")
nym = engine.create_nym(NymMode.PERSISTENT, TransportKind.ONION_SIM)
engine.visit_and_cache(nym, "example.org", cache_bytes=1500)
engine.client_write(nym, "/home/user/bookmarks", b"my pseudonymous haunts")
print("created", nym.nym_id, "guard:", nym.transport.circuit.entry_guard)

receipt = engine.store_nym(nym, "demo-nym", "correct horse battery", cloud)
print(f"stored as {receipt.object_name} v{receipt.version}: "
      f"{receipt.archive_size} bytes, digest {receipt.archive_digest[:16]}...")
engine.terminate_nym(nym)

print("\n== what the cloud provider learned ==")
for entry in cloud.access_log:
    print(f"  {entry['op']} {entry['object']} v{entry['version']} "
          f"from {entry['source']}")
blob = cloud.objects["demo-nym"][0]
print("  bookmarks visible in stored bytes? ->", b"haunts" in blob)

print("\n== restore: an ephemeral loader fetches, then the nym resumes ==")
restored = engine.load_nym("demo-nym", "correct horse battery", cloud,
                           TransportKind.ONION_SIM)
print("restored as", restored.nym_id,
      "| guard:", restored.transport.circuit.entry_guard, "(seeded)")
print("bookmarks ->", engine.client_read(restored,
                                         "/home/user/bookmarks").content)

print("\n== wrong password fails closed ==")
from nymkit.snapstore import AuthFailureError
try:
    engine.load_nym("demo-nym", "wrong password", cloud)
except AuthFailureError as exc:
    print("AuthFailure:", exc)
engine.terminate_nym(restored)
