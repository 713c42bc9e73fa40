"""Quasi-persistent nym archives: compress-then-encrypt with integrity.

Archive layout (integers big-endian):

    magic      12 bytes  b"NYMKIT-SNAP\\x00"
    version    u16       format version (1)
    kdf id     u8        1 = scrypt
    log2(N)    u8        scrypt cost
    r          u8
    p          u8
    comp id    u8        1 = zlib
    reserved   u8
    salt       16 bytes  fresh per archive
    nonce      24 bytes  fresh per archive
    body len   u64
    body       AES-256-GCM ciphertext of zlib(manifest || layers)
    tag        16 bytes  GCM tag (header bound as associated data)

Everything after the header is encrypted, including the manifest, so a
storage provider learns nothing about the pseudonym beyond archive size.
Wrong password and tampering are externally indistinguishable: both raise
AuthFailureError, and no partial plaintext is ever released.

Backends store immutable, versioned objects. The mock cloud service
requires a login session and only accepts transfers carried over a
transport stream handle, never a direct connection — its access log
records the stream's observed exit identity, not the user's gateway.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import overlay
from .transports import GuardSeed, StreamHandle

SNAP_MAGIC = b"NYMKIT-SNAP\x00"
SNAP_VERSION = 1
SALT_LEN = 16
NONCE_LEN = 24
TAG_LEN = 16
_KDF_SCRYPT = 1
_COMP_ZLIB = 1
_HEADER_LEN = len(SNAP_MAGIC) + 2 + 6 + SALT_LEN + NONCE_LEN


class SnapstoreError(Exception):
    pass


class AuthFailureError(SnapstoreError):
    """Wrong password or tampered archive — deliberately indistinguishable."""


class BadFormatError(SnapstoreError):
    pass


class NotAuthenticatedError(SnapstoreError):
    pass


class NotFoundError(SnapstoreError):
    pass


class DirectConnectionError(SnapstoreError):
    """Cloud transfer attempted without a transport stream."""


@dataclass(frozen=True)
class KdfParams:
    log2_n: int = 14
    r: int = 8
    p: int = 1


# Low-cost parameters for tests and demos; recorded in the header like any
# other choice, so archives remain self-describing.
FAST_KDF = KdfParams(log2_n=4, r=8, p=1)


def derive_key(password: str, salt: bytes, params: KdfParams) -> bytes:
    return hashlib.scrypt(password.encode("utf-8"), salt=salt,
                          n=1 << params.log2_n, r=params.r, p=params.p,
                          maxmem=256 * 1024 * 1024, dklen=32)


@dataclass
class Manifest:
    nym_name: str
    mode: str
    anon_digest: str
    comm_digest: str
    created_at: float
    extra: dict = field(default_factory=dict)

    def to_json(self) -> bytes:
        return json.dumps({
            "nym_name": self.nym_name, "mode": self.mode,
            "anon_digest": self.anon_digest, "comm_digest": self.comm_digest,
            "created_at": self.created_at, "extra": self.extra,
        }, sort_keys=True).encode("utf-8")

    @classmethod
    def from_json(cls, raw: bytes) -> "Manifest":
        obj = json.loads(raw.decode("utf-8"))
        return cls(nym_name=obj["nym_name"], mode=obj["mode"],
                   anon_digest=obj["anon_digest"], comm_digest=obj["comm_digest"],
                   created_at=obj["created_at"], extra=obj.get("extra", {}))


def _pack_header(params: KdfParams, salt: bytes, nonce: bytes) -> bytes:
    return b"".join([
        SNAP_MAGIC,
        struct.pack(">H", SNAP_VERSION),
        bytes([_KDF_SCRYPT, params.log2_n, params.r, params.p, _COMP_ZLIB, 0]),
        salt,
        nonce,
    ])


def pack(anon_layer: overlay.Layer, comm_layer: overlay.Layer,
         manifest: Manifest, password: str,
         kdf_params: KdfParams = KdfParams(),
         salt: Optional[bytes] = None, nonce: Optional[bytes] = None) -> bytes:
    """Serialize, compress and encrypt two writable layers plus manifest.

    salt/nonce are freshly random per call; overriding them is for
    reproducibility tests only."""
    anon_bytes = overlay.serialize_layer(anon_layer)
    comm_bytes = overlay.serialize_layer(comm_layer)
    manifest.anon_digest = hashlib.sha256(anon_bytes).hexdigest()
    manifest.comm_digest = hashlib.sha256(comm_bytes).hexdigest()
    mjson = manifest.to_json()
    plain = b"".join([
        struct.pack(">I", len(mjson)), mjson,
        struct.pack(">Q", len(anon_bytes)), anon_bytes,
        struct.pack(">Q", len(comm_bytes)), comm_bytes,
    ])
    salt = salt if salt is not None else os.urandom(SALT_LEN)
    nonce = nonce if nonce is not None else os.urandom(NONCE_LEN)
    header = _pack_header(kdf_params, salt, nonce)
    key = derive_key(password, salt, kdf_params)
    sealed = AESGCM(key).encrypt(nonce, zlib.compress(plain, 6), header)
    body, tag = sealed[:-TAG_LEN], sealed[-TAG_LEN:]
    return header + struct.pack(">Q", len(body)) + body + tag


def unpack(data: bytes, password: str):
    """Decrypt-verify-decompress; returns (anon_layer, comm_layer, manifest).

    Fails atomically: AuthFailureError for wrong password or any
    modification, BadFormatError for structural damage."""
    if len(data) < _HEADER_LEN + 8 + TAG_LEN or not data.startswith(SNAP_MAGIC):
        raise BadFormatError("not a snapshot archive")
    pos = len(SNAP_MAGIC)
    (version,) = struct.unpack_from(">H", data, pos)
    pos += 2
    if version != SNAP_VERSION:
        raise BadFormatError(f"unsupported version {version}")
    kdf_id, log2_n, r, p, comp_id, _ = data[pos:pos + 6]
    pos += 6
    if kdf_id != _KDF_SCRYPT or comp_id != _COMP_ZLIB:
        raise BadFormatError("unknown kdf or compression id")
    if not (1 <= log2_n <= 24 and 1 <= r <= 64 and 1 <= p <= 16):
        raise BadFormatError("kdf parameters out of range")
    salt = data[pos:pos + SALT_LEN]
    pos += SALT_LEN
    nonce = data[pos:pos + NONCE_LEN]
    pos += NONCE_LEN
    header = data[:pos]
    (body_len,) = struct.unpack_from(">Q", data, pos)
    pos += 8
    body = data[pos:pos + body_len]
    tag = data[pos + body_len:pos + body_len + TAG_LEN]
    if len(body) != body_len or len(tag) != TAG_LEN:
        raise BadFormatError("truncated archive")
    key = derive_key(password, salt, KdfParams(log2_n, r, p))
    try:
        plain = zlib.decompress(AESGCM(key).decrypt(nonce, body + tag, header))
    except InvalidTag:
        raise AuthFailureError("authentication failed") from None
    except zlib.error as exc:
        raise BadFormatError(f"decompression failed: {exc}") from None
    try:
        (mlen,) = struct.unpack_from(">I", plain, 0)
        off = 4 + mlen
        manifest = Manifest.from_json(plain[4:off])
        (alen,) = struct.unpack_from(">Q", plain, off)
        off += 8
        anon_bytes = plain[off:off + alen]
        off += alen
        (clen,) = struct.unpack_from(">Q", plain, off)
        off += 8
        comm_bytes = plain[off:off + clen]
    except (struct.error, json.JSONDecodeError) as exc:
        raise BadFormatError(f"malformed body: {exc}") from None
    if hashlib.sha256(anon_bytes).hexdigest() != manifest.anon_digest or \
            hashlib.sha256(comm_bytes).hexdigest() != manifest.comm_digest:
        raise BadFormatError("manifest digests do not match layers")
    anon_layer = overlay.deserialize_layer(anon_bytes)
    comm_layer = overlay.deserialize_layer(comm_bytes)
    return anon_layer, comm_layer, manifest


def derive_guard_seed(location: str, password: str) -> GuardSeed:
    """Deterministic 32-byte seed from the storage location and password,
    so the same entry guard is chosen on every load — including by the
    ephemeral loader nym."""
    digest = hashlib.sha256(
        location.encode("utf-8") + b"\x00" + password.encode("utf-8")).digest()
    return GuardSeed(digest)


# --- storage backends -------------------------------------------------------

class StorageBackend:
    kind = "abstract"
    requires_stream = False

    @property
    def locator(self) -> str:
        raise NotImplementedError

    def put(self, name: str, data: bytes, via: Optional[StreamHandle] = None) -> int:
        raise NotImplementedError

    def get(self, name: str, version: Optional[int] = None,
            via: Optional[StreamHandle] = None) -> bytes:
        raise NotImplementedError

    def versions(self, name: str) -> list:
        raise NotImplementedError

    def set_alias(self, name: str, alias: str, version: int) -> None:
        raise NotImplementedError

    def get_alias(self, name: str, alias: str) -> Optional[int]:
        raise NotImplementedError


class LocalDirBackend(StorageBackend):
    """One file per object version: `<object>.<version>`; aliases are small
    pointer files `<object>.<alias>`. Writes are temp-file-then-rename so a
    failure mid-put never leaves a partial object."""

    kind = "localdir"

    def __init__(self, root, locator_label: Optional[str] = None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locator = locator_label or f"localdir:{self.root}"
        self._fail_next_put = False

    @property
    def locator(self) -> str:
        return self._locator

    def inject_fault_next_put(self) -> None:
        self._fail_next_put = True

    def versions(self, name: str) -> list:
        found = []
        for path in self.root.glob(f"{name}.*"):
            suffix = path.name[len(name) + 1:]
            if suffix.isdigit():
                found.append(int(suffix))
        return sorted(found)

    def put(self, name: str, data: bytes, via: Optional[StreamHandle] = None) -> int:
        existing = self.versions(name)
        version = (existing[-1] + 1) if existing else 1
        final = self.root / f"{name}.{version}"
        tmp = self.root / f".{name}.{version}.tmp"
        tmp.write_bytes(data)
        if self._fail_next_put:
            self._fail_next_put = False
            tmp.unlink()
            raise SnapstoreError("injected backend fault")
        tmp.rename(final)
        return version

    def get(self, name: str, version: Optional[int] = None,
            via: Optional[StreamHandle] = None) -> bytes:
        versions = self.versions(name)
        if not versions:
            raise NotFoundError(name)
        version = version if version is not None else versions[-1]
        path = self.root / f"{name}.{version}"
        if not path.exists():
            raise NotFoundError(f"{name}.{version}")
        return path.read_bytes()

    def set_alias(self, name: str, alias: str, version: int) -> None:
        (self.root / f"{name}.{alias}").write_text(str(version))

    def get_alias(self, name: str, alias: str) -> Optional[int]:
        path = self.root / f"{name}.{alias}"
        if not path.exists():
            return None
        return int(path.read_text())


class MockCloudBackend(StorageBackend):
    """In-memory stand-in for a free cloud storage service with a login
    step. Access is logged with the observed source identity so tests can
    assert the provider never sees the user's gateway address."""

    kind = "mockcloud"
    requires_stream = True

    def __init__(self, service_name: str = "cloudbox"):
        self.service_name = service_name
        self.accounts: dict = {}
        self.objects: dict = {}
        self.aliases: dict = {}
        self.session_token: Optional[str] = None
        self.access_log: list = []
        self._fail_next_put = False

    @property
    def locator(self) -> str:
        return f"mockcloud:{self.service_name}"

    def login(self, username: str, secret: str) -> str:
        self.accounts.setdefault(username, secret)
        if self.accounts[username] != secret:
            raise NotAuthenticatedError("bad cloud credentials")
        self.session_token = f"tok-{os.urandom(8).hex()}"
        return self.session_token

    def logout(self) -> None:
        self.session_token = None

    def inject_fault_next_put(self) -> None:
        self._fail_next_put = True

    def _check(self, via: Optional[StreamHandle]) -> str:
        if self.session_token is None:
            raise NotAuthenticatedError(f"login to {self.service_name} first")
        if via is None:
            raise DirectConnectionError("cloud transfers must ride a transport stream")
        return via.observed_source

    def put(self, name: str, data: bytes, via: Optional[StreamHandle] = None) -> int:
        source = self._check(via)
        carried = via.transfer(data)
        if self._fail_next_put:
            self._fail_next_put = False
            raise SnapstoreError("injected cloud fault")
        blobs = self.objects.setdefault(name, [])
        blobs.append(bytes(carried))
        version = len(blobs)
        self.access_log.append({"op": "put", "object": name,
                                "version": version, "source": source})
        return version

    def get(self, name: str, version: Optional[int] = None,
            via: Optional[StreamHandle] = None) -> bytes:
        source = self._check(via)
        blobs = self.objects.get(name)
        if not blobs:
            raise NotFoundError(name)
        version = version if version is not None else len(blobs)
        if not 1 <= version <= len(blobs):
            raise NotFoundError(f"{name}@{version}")
        data = blobs[version - 1]
        self.access_log.append({"op": "get", "object": name,
                                "version": version, "source": source})
        via.transfer(data)
        return data

    def versions(self, name: str) -> list:
        return list(range(1, len(self.objects.get(name, [])) + 1))

    def set_alias(self, name: str, alias: str, version: int) -> None:
        self.aliases[(name, alias)] = version

    def get_alias(self, name: str, alias: str) -> Optional[int]:
        return self.aliases.get((name, alias))


def make_manifest(nym_name: str, mode: str, extra: Optional[dict] = None) -> Manifest:
    return Manifest(nym_name=nym_name, mode=mode, anon_digest="", comm_digest="",
                    created_at=time.time(), extra=dict(extra or {}))
