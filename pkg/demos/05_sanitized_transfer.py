"""Walkthrough: the sanitation VM, the only road from host files into a nym.

A GPS-tagged photo is analyzed, blocked, scrubbed under a paranoia preset,
and only then handed over. A document gets rasterized into bitmaps so
nothing structured survives.
"""

import numpy as np

from nymkit import sanivm
from nymkit.ctl import build_engine
from nymkit.nymcore import NymMode
from nymkit.sanivm import MediaFile, ScrubPlan, Transform, UnresolvedRiskError
from nymkit.transports import TransportKind

engine = build_engine(local_store="/tmp/nymkit-demo-store")
nym = engine.create_nym(NymMode.EPHEMERAL, TransportKind.INCOGNITO)

rng = np.random.default_rng(1)
pixels = rng.integers(0, 256, size=(16, 24, 3), dtype=np.uint8)
photo = MediaFile("protest.nymbmp", sanivm.encode_image(
    24, 16, pixels,
    metadata={"gps.lat": "41.3851", "gps.lon": "2.1734",
              "serial": "CAM-88231", "author": "bob",
              "created": "2014-05-01T18:22:00"},
    regions=[(4, 4, 8, 6)]))

print("== risk analysis ==")
for finding in engine.sanivm.analyze(photo):
    print(f"  [{finding.severity.value:6}] {finding.field}: {finding.rationale}")

print("\n== transfer without a plan is refused ==")
try:
    engine.transfer_file(nym, photo, ScrubPlan(transforms=()))
except UnresolvedRiskError as exc:
    print("  UnresolvedRisk:", exc)

print("\n== paranoia level 2 scrub, then transfer ==")
plan = ScrubPlan.for_paranoia(2, photo.kind)
print("  plan:", [t.value for t in plan.transforms])
dest = engine.transfer_file(nym, photo, plan)
delivered = engine.client_read(nym, dest)
cleaned = MediaFile("delivered", delivered.content)
print("  placed at", dest, "| residual findings:",
      engine.sanivm.analyze(cleaned))
print("  original untouched:", photo.metadata()["gps.lat"] == "41.3851")

print("\n== documents can be rasterized to pixel-only pages ==")
doc = MediaFile("plans.nymdoc", sanivm.encode_document(
    ["meet at the square at dawn", "bring cameras"],
    {"author": "bob", "creator": "editor 9.1"}))
flat = engine.sanivm.scrub(doc, ScrubPlan(transforms=(Transform.RASTERIZE_DOCUMENT,)))
frames = sanivm.decode_image_sequence(flat.payload)
print(f"  {len(frames)} page bitmaps, metadata={flat.metadata()}, "
      f"text recoverable: {b'square' in flat.payload}")

print("\n== audit log ==")
print(engine.sanivm.audit_ldjson())
