"""Non-networked sanitation environment: the only path for host files into
a nym's namespace.

Host sources are mounted read-only, every candidate file is risk-analyzed
(metadata blacklist, declared sensitive regions, unrecognized formats),
and a user-approved transform plan is applied before the scrubbed copy is
placed in the destination nym's inbound directory via the hypervisor
shared-folder hop. High-severity findings block the transfer unless the
plan covers them or the user explicitly overrides; every run is recorded
in an audit log.

Media fixtures are simple in-repo container formats — a tagged bitmap and
a paged text document — because the pipeline, the risk taxonomy and the
transforms are the point here, not codec engineering. Real-format
adapters can plug in behind the same MediaFile interface.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

IMAGE_MAGIC = b"NYMBMP1\x00"
SEQUENCE_MAGIC = b"NYMSEQ1\x00"
DOCUMENT_MAGIC = b"NYMDOC1\x00"


class SanivmError(Exception):
    pass


class KindMismatchError(SanivmError):
    pass


class UnresolvedRiskError(SanivmError):
    pass


class UnknownNymError(SanivmError):
    pass


class ReadOnlySourceError(SanivmError):
    pass


class BadMediaError(SanivmError):
    pass


class MediaKind(Enum):
    IMAGE = "image"
    DOCUMENT = "document"
    UNKNOWN = "unknown"


class Severity(Enum):
    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"


class Transform(Enum):
    STRIP_METADATA = "strip-metadata"
    BLUR_REGIONS = "blur-regions"
    NOISE_DOWNSCALE = "noise-downscale"
    RASTERIZE_DOCUMENT = "rasterize-document"


# --- fixture container formats ---------------------------------------------

def _pack_tags(metadata: dict) -> bytes:
    out = [struct.pack(">I", len(metadata))]
    for key in sorted(metadata):
        kraw, vraw = key.encode("utf-8"), str(metadata[key]).encode("utf-8")
        out += [struct.pack(">H", len(kraw)), kraw,
                struct.pack(">H", len(vraw)), vraw]
    return b"".join(out)


def _unpack_tags(data: bytes, pos: int):
    (count,) = struct.unpack_from(">I", data, pos)
    pos += 4
    tags = {}
    for _ in range(count):
        (klen,) = struct.unpack_from(">H", data, pos)
        pos += 2
        key = data[pos:pos + klen].decode("utf-8")
        pos += klen
        (vlen,) = struct.unpack_from(">H", data, pos)
        pos += 2
        tags[key] = data[pos:pos + vlen].decode("utf-8")
        pos += vlen
    return tags, pos


def encode_image(width: int, height: int, pixels: np.ndarray,
                 metadata: Optional[dict] = None,
                 regions: Optional[list] = None) -> bytes:
    """Tagged bitmap: magic, dims, tag table, declared regions, RGB bytes."""
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(height, width, 3)
    out = [IMAGE_MAGIC, struct.pack(">II", width, height),
           _pack_tags(metadata or {}),
           struct.pack(">I", len(regions or []))]
    for x, y, w, h in regions or []:
        out.append(struct.pack(">IIII", x, y, w, h))
    out.append(pixels.tobytes())
    return b"".join(out)


def decode_image(data: bytes):
    if not data.startswith(IMAGE_MAGIC):
        raise BadMediaError("not a bitmap container")
    pos = len(IMAGE_MAGIC)
    width, height = struct.unpack_from(">II", data, pos)
    pos += 8
    tags, pos = _unpack_tags(data, pos)
    (nregions,) = struct.unpack_from(">I", data, pos)
    pos += 4
    regions = []
    for _ in range(nregions):
        regions.append(struct.unpack_from(">IIII", data, pos))
        pos += 16
    raw = data[pos:pos + width * height * 3]
    if len(raw) != width * height * 3:
        raise BadMediaError("truncated pixel data")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return width, height, pixels, tags, regions


def encode_image_sequence(frames: list) -> bytes:
    """Metadata-free series of bitmaps (the rasterizer's output)."""
    out = [SEQUENCE_MAGIC, struct.pack(">I", len(frames))]
    for width, height, pixels in frames:
        raw = np.asarray(pixels, dtype=np.uint8).reshape(height, width, 3).tobytes()
        out.append(struct.pack(">II", width, height))
        out.append(raw)
    return b"".join(out)


def decode_image_sequence(data: bytes) -> list:
    if not data.startswith(SEQUENCE_MAGIC):
        raise BadMediaError("not an image sequence")
    pos = len(SEQUENCE_MAGIC)
    (count,) = struct.unpack_from(">I", data, pos)
    pos += 4
    frames = []
    for _ in range(count):
        width, height = struct.unpack_from(">II", data, pos)
        pos += 8
        raw = data[pos:pos + width * height * 3]
        pos += width * height * 3
        frames.append((width, height,
                       np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)))
    return frames


def encode_document(pages: list, metadata: Optional[dict] = None) -> bytes:
    """Paged text container: magic, tag table, length-prefixed UTF-8 pages."""
    out = [DOCUMENT_MAGIC, _pack_tags(metadata or {}),
           struct.pack(">I", len(pages))]
    for page in pages:
        raw = page.encode("utf-8")
        out.append(struct.pack(">I", len(raw)))
        out.append(raw)
    return b"".join(out)


def decode_document(data: bytes):
    if not data.startswith(DOCUMENT_MAGIC):
        raise BadMediaError("not a document container")
    pos = len(DOCUMENT_MAGIC)
    tags, pos = _unpack_tags(data, pos)
    (count,) = struct.unpack_from(">I", data, pos)
    pos += 4
    pages = []
    for _ in range(count):
        (plen,) = struct.unpack_from(">I", data, pos)
        pos += 4
        pages.append(data[pos:pos + plen].decode("utf-8"))
        pos += plen
    return pages, tags


def detect_kind(payload: bytes) -> MediaKind:
    if payload.startswith(IMAGE_MAGIC) or payload.startswith(SEQUENCE_MAGIC):
        return MediaKind.IMAGE
    if payload.startswith(DOCUMENT_MAGIC):
        return MediaKind.DOCUMENT
    return MediaKind.UNKNOWN


@dataclass
class MediaFile:
    name: str
    payload: bytes

    @property
    def kind(self) -> MediaKind:
        return detect_kind(self.payload)

    def metadata(self) -> dict:
        kind = self.kind
        if kind is MediaKind.IMAGE and self.payload.startswith(IMAGE_MAGIC):
            return decode_image(self.payload)[3]
        if kind is MediaKind.DOCUMENT:
            return decode_document(self.payload)[1]
        return {}

    def regions(self) -> list:
        if self.payload.startswith(IMAGE_MAGIC):
            return decode_image(self.payload)[4]
        return []

    def digest(self) -> str:
        return hashlib.sha256(self.payload).hexdigest()


# --- risk analysis ----------------------------------------------------------

@dataclass(frozen=True)
class RiskFinding:
    field: str
    severity: Severity
    rationale: str


# (predicate over lowercased key, severity, rationale); configurable.
DEFAULT_BLACKLIST = (
    (lambda k: k.startswith("gps.") or k == "gps", Severity.HIGH,
     "geolocation tag pinpoints where the file was made"),
    (lambda k: "serial" in k or k == "device_id", Severity.HIGH,
     "device identifier links files from the same hardware"),
    (lambda k: k in ("author", "creator", "artist", "owner"), Severity.MEDIUM,
     "authorship field names a person or account"),
    (lambda k: k in ("timestamp", "created", "modified", "date", "datetime"),
     Severity.LOW, "timestamp narrows when the file was made"),
)


def blacklisted(key: str, blacklist=DEFAULT_BLACKLIST):
    for predicate, severity, rationale in blacklist:
        if predicate(key.lower()):
            return severity, rationale
    return None


def analyze(file: MediaFile, blacklist=DEFAULT_BLACKLIST) -> list:
    """Risk findings for one file; empty list means nothing recognized."""
    if file.kind is MediaKind.UNKNOWN:
        return [RiskFinding("format", Severity.HIGH,
                            "unrecognized format; contents cannot be inspected")]
    findings = []
    for key in sorted(file.metadata()):
        hit = blacklisted(key, blacklist)
        if hit:
            findings.append(RiskFinding(key, hit[0], hit[1]))
    for i, _ in enumerate(file.regions()):
        findings.append(RiskFinding(f"region:{i}", Severity.MEDIUM,
                                    "declared sensitive region (e.g. a face)"))
    return findings


# --- transform plans --------------------------------------------------------

@dataclass
class ScrubPlan:
    transforms: tuple
    paranoia: Optional[int] = None

    @classmethod
    def for_paranoia(cls, level: int, kind: MediaKind) -> "ScrubPlan":
        """Preset transform sets per paranoia level 0-2."""
        if kind is MediaKind.DOCUMENT:
            picks = {0: (Transform.STRIP_METADATA,),
                     1: (Transform.STRIP_METADATA,),
                     2: (Transform.RASTERIZE_DOCUMENT,)}[level]
        else:
            picks = {0: (Transform.STRIP_METADATA,),
                     1: (Transform.STRIP_METADATA, Transform.BLUR_REGIONS),
                     2: (Transform.STRIP_METADATA, Transform.BLUR_REGIONS,
                         Transform.NOISE_DOWNSCALE)}[level]
        return cls(transforms=picks, paranoia=level)

    def validate_for(self, kind: MediaKind) -> None:
        for transform in self.transforms:
            if transform is Transform.RASTERIZE_DOCUMENT and kind is not MediaKind.DOCUMENT:
                raise KindMismatchError("rasterize applies to documents only")
            if transform in (Transform.BLUR_REGIONS, Transform.NOISE_DOWNSCALE) \
                    and kind is not MediaKind.IMAGE:
                raise KindMismatchError(f"{transform.value} applies to images only")

    def covers(self, finding: RiskFinding, kind: MediaKind) -> bool:
        if finding.field == "format":
            return False  # nothing scrubs an unrecognized format
        if finding.field.startswith("region:"):
            return Transform.BLUR_REGIONS in self.transforms
        if Transform.STRIP_METADATA in self.transforms:
            return True
        return kind is MediaKind.DOCUMENT and \
            Transform.RASTERIZE_DOCUMENT in self.transforms


def _strip(file: MediaFile, blacklist) -> MediaFile:
    if file.payload.startswith(IMAGE_MAGIC):
        width, height, pixels, tags, regions = decode_image(file.payload)
        kept = {k: v for k, v in tags.items() if not blacklisted(k, blacklist)}
        return MediaFile(file.name, encode_image(width, height, pixels, kept, regions))
    if file.kind is MediaKind.DOCUMENT:
        pages, tags = decode_document(file.payload)
        kept = {k: v for k, v in tags.items() if not blacklisted(k, blacklist)}
        return MediaFile(file.name, encode_document(pages, kept))
    return file


def _blur_regions(file: MediaFile) -> MediaFile:
    width, height, pixels, tags, regions = decode_image(file.payload)
    out = pixels.copy()
    for x, y, w, h in regions:
        block = out[y:y + h, x:x + w]
        if block.size:
            block[:] = block.reshape(-1, 3).mean(axis=0).astype(np.uint8)
    return MediaFile(file.name, encode_image(width, height, out, tags, regions=[]))


def _noise_downscale(file: MediaFile, amplitude: int, rng: np.random.Generator) -> MediaFile:
    width, height, pixels, tags, regions = decode_image(file.payload)
    new_w, new_h = max(1, width // 2), max(1, height // 2)
    small = pixels[:new_h * 2:2, :new_w * 2:2].astype(np.int16)
    noise = rng.integers(-amplitude, amplitude + 1, size=small.shape, dtype=np.int16)
    noisy = np.clip(small + noise, 0, 255).astype(np.uint8)
    scaled = [(x // 2, y // 2, max(1, w // 2), max(1, h // 2))
              for x, y, w, h in regions]
    return MediaFile(file.name, encode_image(new_w, new_h, noisy, tags, scaled))


_GLYPH_CELL_W, _GLYPH_CELL_H = 4, 6
_PAGE_COLS = 64


def _glyph(codepoint: int) -> np.ndarray:
    # Deterministic 4x6 pixel cell per codepoint: a visual stand-in that
    # carries no byte-level trace of the original text.
    bits = np.unpackbits(np.frombuffer(
        hashlib.sha256(codepoint.to_bytes(4, "big")).digest()[:3], dtype=np.uint8))
    cell = np.zeros((_GLYPH_CELL_H, _GLYPH_CELL_W, 3), dtype=np.uint8)
    grid = bits[:_GLYPH_CELL_H * _GLYPH_CELL_W].reshape(_GLYPH_CELL_H, _GLYPH_CELL_W)
    cell[grid == 1] = 16
    cell[grid == 0] = 240
    return cell


def _rasterize(file: MediaFile) -> MediaFile:
    pages, _tags = decode_document(file.payload)
    frames = []
    for page in pages:
        lines = []
        for raw_line in page.splitlines() or [""]:
            for start in range(0, max(len(raw_line), 1), _PAGE_COLS):
                lines.append(raw_line[start:start + _PAGE_COLS])
        height = max(len(lines), 1) * _GLYPH_CELL_H
        width = _PAGE_COLS * _GLYPH_CELL_W
        canvas = np.full((height, width, 3), 255, dtype=np.uint8)
        for row, line in enumerate(lines):
            for col, char in enumerate(line[:_PAGE_COLS]):
                canvas[row * _GLYPH_CELL_H:(row + 1) * _GLYPH_CELL_H,
                       col * _GLYPH_CELL_W:(col + 1) * _GLYPH_CELL_W] = _glyph(ord(char))
        frames.append((width, height, canvas))
    return MediaFile(file.name, encode_image_sequence(frames))


def scrub(file: MediaFile, plan: ScrubPlan, *, noise_amplitude: int = 8,
          rng: Optional[np.random.Generator] = None,
          blacklist=DEFAULT_BLACKLIST) -> MediaFile:
    """Apply the plan's transforms in order; the original is untouched."""
    plan.validate_for(file.kind)
    rng = rng or np.random.default_rng()
    result = MediaFile(file.name, file.payload)
    for transform in plan.transforms:
        if transform is Transform.STRIP_METADATA:
            result = _strip(result, blacklist)
        elif transform is Transform.BLUR_REGIONS:
            result = _blur_regions(result)
        elif transform is Transform.NOISE_DOWNSCALE:
            result = _noise_downscale(result, noise_amplitude, rng)
        elif transform is Transform.RASTERIZE_DOCUMENT:
            result = _rasterize(result)
    return result


# --- source catalog and the SaniVM itself -----------------------------------

class SourceCatalog:
    """Read-only view of host file systems mounted into the SaniVM."""

    def __init__(self, host_view: dict):
        self._files = {path: bytes(data) for path, data in host_view.items()}

    def paths(self) -> list:
        return sorted(self._files)

    def read(self, path: str) -> bytes:
        if path not in self._files:
            raise KeyError(path)
        return self._files[path]

    def write(self, path: str, data: bytes) -> None:
        raise ReadOnlySourceError("host sources are mounted read-only")

    def digest(self, path: str) -> str:
        return hashlib.sha256(self.read(path)).hexdigest()

    def as_media(self, path: str) -> MediaFile:
        return MediaFile(name=path.rsplit("/", 1)[-1], payload=self.read(path))


def mount_sources(host_view: dict) -> SourceCatalog:
    return SourceCatalog(host_view)


# Simulated shared folder reports a fixed capacity: the real VirtFS leaks
# the host's free space, which is itself a fingerprint.
SHARED_FOLDER_CAPACITY = 1 << 30


@dataclass
class TransferRecord:
    file: str
    findings: list
    plan: list
    overridden: bool
    nym_id: str


class SanitationVm:
    """Scrub pipeline plus the per-nym inbound hand-off bookkeeping."""

    def __init__(self, blacklist=DEFAULT_BLACKLIST, noise_amplitude: int = 8):
        self.blacklist = blacklist
        self.noise_amplitude = noise_amplitude
        self.catalog: Optional[SourceCatalog] = None
        self.hypervisor_folder: list = []
        self.audit_log: list = []

    def mount(self, host_view: dict) -> SourceCatalog:
        self.catalog = mount_sources(host_view)
        return self.catalog

    def analyze(self, file: MediaFile) -> list:
        return analyze(file, self.blacklist)

    def scrub(self, file: MediaFile, plan: ScrubPlan,
              rng: Optional[np.random.Generator] = None) -> MediaFile:
        return scrub(file, plan, noise_amplitude=self.noise_amplitude,
                     rng=rng, blacklist=self.blacklist)

    def check_plan(self, file: MediaFile, plan: ScrubPlan, override: bool) -> list:
        """Findings that block the transfer (uncovered High, no override)."""
        findings = self.analyze(file)
        if override:
            return []
        return [f for f in findings
                if f.severity is Severity.HIGH and not plan.covers(f, file.kind)]

    def prepare_transfer(self, file: MediaFile, plan: ScrubPlan, nym_id: str,
                         override: bool = False,
                         rng: Optional[np.random.Generator] = None) -> MediaFile:
        """Validate risk coverage and produce the scrubbed copy; the engine
        completes the hand-off into the nym's inbound directory."""
        findings = self.analyze(file)
        blocking = self.check_plan(file, plan, override)
        if blocking:
            raise UnresolvedRiskError(
                "unresolved high-severity findings: "
                + ", ".join(f.field for f in blocking))
        cleaned = self.scrub(file, plan, rng=rng)
        self.hypervisor_folder.append((nym_id, cleaned.name))
        self.audit_log.append(TransferRecord(
            file=file.name,
            findings=[(f.field, f.severity.value) for f in findings],
            plan=[t.value for t in plan.transforms],
            overridden=override,
            nym_id=nym_id,
        ))
        return cleaned

    def audit_ldjson(self) -> str:
        return "\n".join(json.dumps({
            "file": rec.file, "findings": rec.findings, "plan": rec.plan,
            "overrides": rec.overridden, "nym": rec.nym_id,
        }, sort_keys=True) for rec in self.audit_log)
