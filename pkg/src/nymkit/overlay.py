"""Layered union file store with copy-on-write semantics.

Every VM disk in the engine is an OverlayStack of three layers: a shared
read-only base image, a read-only per-role configuration layer that masks
files on the base, and a single writable top layer that absorbs all writes
(copy-on-write) and deletions (whiteouts). The writable layer is the unit
that gets extracted, archived and restored.

Layers serialize to a deterministic, path-sorted binary form so layer
digests are reproducible; the base image's serialized form is additionally
covered by a Merkle index so individual 4096-byte chunks can be
authenticated against a pinned root.

Serialized layer format (all integers big-endian):

    magic   16 bytes  b"NYMKIT-LAYER\\x00v1\\x00"
    count   u64       number of records
    record  (repeated, sorted by path)
        u32 path length, path (utf-8)
        u8  whiteout flag (1 = whiteout, no metadata/content follows content rule)
        u32 metadata pair count
        per pair: u32 key length, key, u32 value length, value
        u64 content length, content

Paths are opaque strings; there are no directory entries.
"""

from __future__ import annotations

import hashlib
import struct
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional

LAYER_MAGIC = b"NYMKIT-LAYER\x00v1\x00"
MERKLE_CHUNK_SIZE = 4096


class OverlayError(Exception):
    pass


class LayerReadOnlyError(OverlayError):
    """Mutation attempted on a read-only layer."""


class StackingError(OverlayError):
    """stack_layers precondition violated."""


class PathNotFoundError(OverlayError):
    """remove() of a path that is not currently readable."""


class TamperDetectedError(OverlayError):
    """A chunk failed Merkle authentication against the pinned root."""


class ChunkOutOfRangeError(OverlayError):
    pass


class BadLayerFormatError(OverlayError):
    pass


class LayerMode(Enum):
    READ_ONLY = "read-only"
    WRITABLE = "writable"


def _sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class FileEntry:
    """File content plus abstract attributes (mtime, mode bits, ...)."""

    content: bytes
    metadata: tuple = ()  # sorted (key, value) pairs; kept hashable

    @classmethod
    def make(cls, content: bytes, metadata: Optional[dict] = None) -> "FileEntry":
        pairs = tuple(sorted((metadata or {}).items()))
        return cls(content=bytes(content), metadata=pairs)

    def metadata_dict(self) -> dict:
        return dict(self.metadata)


class Layer:
    """One file-system layer: path -> entry map plus whiteout markers.

    A path appears in at most one of entries/whiteouts. Read-only layers
    reject every mutation after construction.
    """

    def __init__(self, layer_id: Optional[str] = None,
                 mode: LayerMode = LayerMode.WRITABLE):
        self.layer_id = layer_id or f"layer-{uuid.uuid4().hex[:12]}"
        self.mode = mode
        self.entries: dict[str, FileEntry] = {}
        self.whiteouts: set[str] = set()

    def _check_writable(self) -> None:
        if self.mode is not LayerMode.WRITABLE:
            raise LayerReadOnlyError(f"layer {self.layer_id} is read-only")

    def put(self, path: str, content: bytes, metadata: Optional[dict] = None) -> None:
        self._check_writable()
        self.whiteouts.discard(path)
        self.entries[path] = FileEntry.make(content, metadata)

    def delete_entry(self, path: str) -> None:
        self._check_writable()
        self.entries.pop(path, None)

    def add_whiteout(self, path: str) -> None:
        self._check_writable()
        self.entries.pop(path, None)
        self.whiteouts.add(path)

    def is_empty(self) -> bool:
        return not self.entries and not self.whiteouts

    def freeze(self, layer_id: Optional[str] = None) -> "Layer":
        """Read-only deep copy (content is immutable bytes already)."""
        frozen = Layer(layer_id or self.layer_id, LayerMode.READ_ONLY)
        frozen.entries = dict(self.entries)
        frozen.whiteouts = set(self.whiteouts)
        return frozen

    def thaw(self, layer_id: Optional[str] = None) -> "Layer":
        """Writable deep copy, e.g. a restored writable layer."""
        writable = Layer(layer_id or f"{self.layer_id}-rw", LayerMode.WRITABLE)
        writable.entries = dict(self.entries)
        writable.whiteouts = set(self.whiteouts)
        return writable

    def serialize(self) -> bytes:
        return serialize_layer(self)

    def digest(self) -> str:
        return hashlib.sha256(self.serialize()).hexdigest()

    def byte_size(self) -> int:
        return sum(len(e.content) for e in self.entries.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Layer):
            return NotImplemented
        return self.entries == other.entries and self.whiteouts == other.whiteouts

    def __hash__(self):  # identity hashing; content equality via __eq__ only
        return id(self)


def make_layer(contents: dict, layer_id: Optional[str] = None,
               mode: LayerMode = LayerMode.READ_ONLY) -> Layer:
    """Build a layer from {path: bytes | (bytes, metadata dict)}."""
    layer = Layer(layer_id, LayerMode.WRITABLE)
    for path, value in contents.items():
        if isinstance(value, tuple):
            layer.put(path, value[0], value[1])
        else:
            layer.put(path, value)
    layer.mode = mode
    return layer


def serialize_layer(layer: Layer) -> bytes:
    paths = sorted(set(layer.entries) | set(layer.whiteouts))
    out = [LAYER_MAGIC, struct.pack(">Q", len(paths))]
    for path in paths:
        raw = path.encode("utf-8")
        out.append(struct.pack(">I", len(raw)))
        out.append(raw)
        if path in layer.whiteouts:
            out.append(b"\x01")
            out.append(struct.pack(">I", 0))
            out.append(struct.pack(">Q", 0))
            continue
        entry = layer.entries[path]
        out.append(b"\x00")
        out.append(struct.pack(">I", len(entry.metadata)))
        for key, value in entry.metadata:
            kraw, vraw = key.encode("utf-8"), value.encode("utf-8")
            out.append(struct.pack(">I", len(kraw)))
            out.append(kraw)
            out.append(struct.pack(">I", len(vraw)))
            out.append(vraw)
        out.append(struct.pack(">Q", len(entry.content)))
        out.append(entry.content)
    return b"".join(out)


def serialize_layer_with_extents(layer: Layer):
    """Serialized bytes plus {path: (start, end)} byte ranges of each record,
    so a reader can verify just the chunks backing one path."""
    data = serialize_layer(layer)
    extents: dict[str, tuple[int, int]] = {}
    pos = 16 + 8
    view = memoryview(data)
    paths = sorted(set(layer.entries) | set(layer.whiteouts))
    for path in paths:
        start = pos
        (plen,) = struct.unpack_from(">I", view, pos)
        pos += 4 + plen + 1
        (mcount,) = struct.unpack_from(">I", view, pos)
        pos += 4
        for _ in range(mcount):
            (klen,) = struct.unpack_from(">I", view, pos)
            pos += 4 + klen
            (vlen,) = struct.unpack_from(">I", view, pos)
            pos += 4 + vlen
        (clen,) = struct.unpack_from(">Q", view, pos)
        pos += 8 + clen
        extents[path] = (start, pos)
    return data, extents


def deserialize_layer(data: bytes, layer_id: Optional[str] = None,
                      mode: LayerMode = LayerMode.READ_ONLY) -> Layer:
    view = memoryview(data)
    if len(view) < len(LAYER_MAGIC) + 8 or bytes(view[:16]) != LAYER_MAGIC:
        raise BadLayerFormatError("bad layer magic")
    pos = 16
    (count,) = struct.unpack_from(">Q", view, pos)
    pos += 8
    layer = Layer(layer_id, LayerMode.WRITABLE)
    try:
        for _ in range(count):
            (plen,) = struct.unpack_from(">I", view, pos)
            pos += 4
            path = bytes(view[pos:pos + plen]).decode("utf-8")
            pos += plen
            flag = view[pos]
            pos += 1
            (mcount,) = struct.unpack_from(">I", view, pos)
            pos += 4
            metadata = {}
            for _ in range(mcount):
                (klen,) = struct.unpack_from(">I", view, pos)
                pos += 4
                key = bytes(view[pos:pos + klen]).decode("utf-8")
                pos += klen
                (vlen,) = struct.unpack_from(">I", view, pos)
                pos += 4
                metadata[key] = bytes(view[pos:pos + vlen]).decode("utf-8")
                pos += vlen
            (clen,) = struct.unpack_from(">Q", view, pos)
            pos += 8
            content = bytes(view[pos:pos + clen])
            if len(content) != clen:
                raise BadLayerFormatError("truncated content")
            pos += clen
            if flag == 1:
                layer.add_whiteout(path)
            else:
                layer.put(path, content, metadata)
    except (struct.error, IndexError) as exc:
        raise BadLayerFormatError(f"truncated layer record: {exc}") from None
    if pos != len(view):
        raise BadLayerFormatError("trailing bytes after last record")
    layer.mode = mode
    return layer


class OverlayStack:
    """Three stacked layers: [base, config, writable], reads resolve top-down.

    Exactly the topmost layer is writable; all writes land there and lower
    layers are never touched.
    """

    def __init__(self, layers: list[Layer]):
        self.layers = layers

    @property
    def base(self) -> Layer:
        return self.layers[0]

    @property
    def writable(self) -> Layer:
        return self.layers[-1]

    def read(self, path: str) -> Optional[FileEntry]:
        for layer in reversed(self.layers):
            if path in layer.whiteouts:
                return None
            if path in layer.entries:
                return layer.entries[path]
        return None

    def read_with_source(self, path: str) -> tuple[Optional[FileEntry], Optional[Layer]]:
        for layer in reversed(self.layers):
            if path in layer.whiteouts:
                return None, None
            if path in layer.entries:
                return layer.entries[path], layer
        return None, None

    def write(self, path: str, content: bytes, metadata: Optional[dict] = None) -> None:
        self.writable.put(path, content, metadata)

    def remove(self, path: str) -> None:
        if self.read(path) is None:
            raise PathNotFoundError(path)
        top = self.writable
        top.delete_entry(path)
        # Whiteout only needed while a lower layer would still expose the path.
        if self._visible_below(path):
            top.add_whiteout(path)

    def _visible_below(self, path: str) -> bool:
        for layer in reversed(self.layers[:-1]):
            if path in layer.whiteouts:
                return False
            if path in layer.entries:
                return True
        return False

    def extract_writable(self) -> Layer:
        return self.writable.freeze(f"{self.writable.layer_id}-extract")

    def visible_paths(self) -> Iterator[str]:
        seen: set[str] = set()
        for layer in self.layers:
            seen.update(layer.entries)
            seen.update(layer.whiteouts)
        for path in sorted(seen):
            if self.read(path) is not None:
                yield path


def stack_layers(base: Layer, config: Layer, writable: Layer) -> OverlayStack:
    if base.mode is not LayerMode.READ_ONLY:
        raise StackingError("base layer must be read-only")
    if config.mode is not LayerMode.READ_ONLY:
        raise StackingError("config layer must be read-only")
    if config is base or config.layer_id == base.layer_id:
        raise StackingError("config must be a distinct read-only layer")
    if writable.mode is not LayerMode.WRITABLE:
        raise StackingError("top layer must be writable")
    if not writable.is_empty():
        raise StackingError("writable layer must start empty")
    return OverlayStack([base, config, writable])


def restore_stack(base: Layer, config: Layer, restored: Layer) -> OverlayStack:
    """Rebuild a stack around a previously extracted (non-empty) writable layer."""
    placeholder = Layer(mode=LayerMode.WRITABLE)
    stack = stack_layers(base, config, placeholder)
    stack.layers[-1] = restored.thaw()
    return stack


# --- Merkle index over a serialized base image -----------------------------
#
# Binary tree over 4096-byte chunks; leaf = H(0x00 || chunk),
# node = H(0x01 || left || right); an odd node at any level is paired with
# a duplicate of itself. The index pins the root plus one authentication
# path per chunk.

@dataclass
class MerkleIndex:
    root: bytes
    chunk_size: int
    chunk_count: int
    proofs: list = field(repr=False, default_factory=list)

    def root_hex(self) -> str:
        return self.root.hex()


def _leaf_hash(chunk: bytes) -> bytes:
    return _sha256(b"\x00" + chunk)


def _node_hash(left: bytes, right: bytes) -> bytes:
    return _sha256(b"\x01" + left + right)


def chunk_data(data: bytes, chunk_size: int = MERKLE_CHUNK_SIZE) -> list[bytes]:
    return [data[i:i + chunk_size] for i in range(0, len(data), chunk_size)] or [b""]


def build_merkle_index(data: bytes, chunk_size: int = MERKLE_CHUNK_SIZE) -> MerkleIndex:
    chunks = chunk_data(data, chunk_size)
    level = [_leaf_hash(c) for c in chunks]
    # proofs[i] collects (sibling_is_right, sibling_digest) bottom-up
    proofs: list[list[tuple[bool, bytes]]] = [[] for _ in level]
    positions = list(range(len(level)))
    while len(level) > 1:
        if len(level) % 2 == 1:
            level.append(level[-1])
        next_level = []
        for i in range(0, len(level), 2):
            next_level.append(_node_hash(level[i], level[i + 1]))
        for chunk_no, pos in enumerate(positions):
            sibling = pos ^ 1
            if sibling >= len(level):
                sibling = pos
            proofs[chunk_no].append((sibling > pos, level[sibling]))
            positions[chunk_no] = pos // 2
        level = next_level
    return MerkleIndex(root=level[0], chunk_size=chunk_size,
                       chunk_count=len(chunks), proofs=proofs)


def verify_chunk(index: MerkleIndex, chunk_no: int, chunk_bytes: bytes) -> bool:
    """Authenticate one chunk against the pinned root.

    Returns True on success; raises TamperDetectedError when the chunk does
    not authenticate (engine contract: the owning nym must then be shut
    down rather than keep running on a modified base image).
    """
    if not 0 <= chunk_no < index.chunk_count:
        raise ChunkOutOfRangeError(f"chunk {chunk_no} of {index.chunk_count}")
    digest = _leaf_hash(chunk_bytes)
    for sibling_is_right, sibling in index.proofs[chunk_no]:
        if sibling_is_right:
            digest = _node_hash(digest, sibling)
        else:
            digest = _node_hash(sibling, digest)
    if digest != index.root:
        raise TamperDetectedError(f"chunk {chunk_no} failed authentication")
    return True
