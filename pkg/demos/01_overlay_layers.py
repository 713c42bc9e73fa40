"""Walkthrough: the three-layer union file store every VM disk is built on.

Shows configuration masking, copy-on-write, whiteout deletion, extraction
of the writable layer, and Merkle authentication of the shared base image.
"""

from nymkit import overlay

# A miniature distribution image: the read-only base shared by every VM.
base = overlay.make_layer({
    "/etc/rc.local": b"# distribution startup\n",
    "/etc/hostname": b"nymbox\n",
    "/bin/browser": b"\x7fELF synthetic browser",
}, layer_id="base-image")

# The role config layer masks files on the base without touching it.
config = overlay.make_layer({
    "/etc/rc.local": b"# anon role: start browser via the commvm wire\n",
}, layer_id="config-anon")

stack = overlay.stack_layers(base, config,
                             overlay.Layer("rw", overlay.LayerMode.WRITABLE))

print("read /etc/rc.local  ->", stack.read("/etc/rc.local").content)
print("read /etc/hostname  ->", stack.read("/etc/hostname").content)

print("\nwrites are copy-on-write: the base never changes")
digest_before = base.digest()
stack.write("/etc/hostname", b"my-session-name\n")
stack.write("/home/user/notes", b"scratch data")
print("read /etc/hostname  ->", stack.read("/etc/hostname").content)
print("base digest stable  ->", base.digest() == digest_before)

print("\ndeletion is a whiteout in the writable layer")
stack.remove("/bin/browser")
print("read /bin/browser   ->", stack.read("/bin/browser"))
print("whiteouts           ->", sorted(stack.writable.whiteouts))

print("\nthe writable layer is exactly what gets archived")
extracted = stack.extract_writable()
print("extracted entries   ->", sorted(extracted.entries))
print("layer digest        ->", extracted.digest()[:16], "...")

print("\nMerkle authentication of the base image")
data = overlay.serialize_layer(base)
index = overlay.build_merkle_index(data)
chunks = overlay.chunk_data(data)
print(f"base serializes to {len(data)} bytes in {len(chunks)} chunks; "
      f"root {index.root_hex()[:16]}...")
print("chunk 0 verifies    ->", overlay.verify_chunk(index, 0, chunks[0]))
tampered = bytearray(chunks[0])
tampered[7] ^= 0x01
try:
    overlay.verify_chunk(index, 0, bytes(tampered))
except overlay.TamperDetectedError as exc:
    print("1 flipped bit       -> TamperDetected:", exc)
