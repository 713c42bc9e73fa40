"""Installed-OS-as-nym support: block-level copy-on-write over a host disk.

The machine's installed OS boots inside a (non-anonymous) nymbox from a
read-only disk image overlaid with a block COW, so nothing the session does
touches the physical disk unless the user explicitly opts in. Windows
images installed on bare metal carry a driver profile that trips a boot
check until a modeled repair pass patches the designated config block.

Disk descriptor on disk: magic "NYMHDISK", u8 os label, u8 driver profile,
u32 block size, u32 block count, then raw blocks.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

DISK_MAGIC = b"NYMHDISK"
CONFIG_BLOCK = 1
BARE_METAL_MARK = b"DRIVERS:BARE"
VIRTUAL_MARK = b"DRIVERS:VIRT"

# Synthetic repair delta sizes (MB) per OS; configured model values, not
# measurements.
REPAIR_DELTA_MB = {
    "vista": 4.9,
    "windows7": 4.5,
    "windows8": 14.0,
}


class HostnymError(Exception):
    pass


class DriverMismatchError(HostnymError):
    pass


class NotApplicableError(HostnymError):
    pass


class StaleBaseError(HostnymError):
    """Stored COW no longer matches the underlying disk."""


class OsLabel(Enum):
    LINUX = "linux"
    WINDOWS_VISTA = "vista"
    WINDOWS_7 = "windows7"
    WINDOWS_8 = "windows8"

    @property
    def is_windows(self) -> bool:
        return self is not OsLabel.LINUX


class DriverProfile(Enum):
    BARE_METAL = "bare-metal"
    VIRTUAL = "virtual"


@dataclass
class HostDiskImage:
    blocks: tuple
    block_size: int
    os_label: OsLabel
    driver_profile: DriverProfile

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.to_bytes())
        return h.hexdigest()

    def to_bytes(self) -> bytes:
        header = DISK_MAGIC + struct.pack(
            ">BBII",
            list(OsLabel).index(self.os_label),
            list(DriverProfile).index(self.driver_profile),
            self.block_size, len(self.blocks))
        return header + b"".join(self.blocks)

    @classmethod
    def from_bytes(cls, data: bytes) -> "HostDiskImage":
        if not data.startswith(DISK_MAGIC):
            raise HostnymError("not a host disk image")
        os_idx, prof_idx, block_size, count = struct.unpack_from(
            ">BBII", data, len(DISK_MAGIC))
        pos = len(DISK_MAGIC) + 10
        blocks = tuple(data[pos + i * block_size:pos + (i + 1) * block_size]
                       for i in range(count))
        return cls(blocks=blocks, block_size=block_size,
                   os_label=list(OsLabel)[os_idx],
                   driver_profile=list(DriverProfile)[prof_idx])


def make_host_disk(os_label: OsLabel,
                   driver_profile: DriverProfile = DriverProfile.BARE_METAL,
                   block_count: int = 16, block_size: int = 512,
                   seed: int = 7) -> HostDiskImage:
    """Deterministic synthetic installed-OS image."""
    blocks = []
    for i in range(block_count):
        token = hashlib.sha256(
            f"{os_label.value}:{seed}:{i}".encode()).digest()
        blocks.append((token * (block_size // 32 + 1))[:block_size])
    mark = BARE_METAL_MARK if driver_profile is DriverProfile.BARE_METAL else VIRTUAL_MARK
    config = mark + blocks[CONFIG_BLOCK][len(mark):]
    blocks[CONFIG_BLOCK] = config[:block_size]
    return HostDiskImage(blocks=tuple(blocks), block_size=block_size,
                         os_label=os_label, driver_profile=driver_profile)


class CowDisk:
    """Reads resolve upper-then-lower; writes only ever land in upper."""

    def __init__(self, lower: HostDiskImage, upper: Optional[dict] = None):
        self.lower = lower
        self.upper: dict = dict(upper or {})

    def read_block(self, index: int) -> bytes:
        if index in self.upper:
            return self.upper[index]
        if not 0 <= index < len(self.lower.blocks):
            raise HostnymError(f"block {index} out of range")
        return self.lower.blocks[index]

    def write_block(self, index: int, data: bytes) -> None:
        if not 0 <= index < len(self.lower.blocks):
            raise HostnymError(f"block {index} out of range")
        if len(data) != self.lower.block_size:
            data = (data + b"\x00" * self.lower.block_size)[:self.lower.block_size]
        self.upper[index] = bytes(data)

    def block_count(self) -> int:
        return len(self.lower.blocks)

    def upper_bytes(self) -> int:
        return sum(len(b) for b in self.upper.values())

    def discard_upper(self) -> None:
        self.upper.clear()

    def merge(self) -> HostDiskImage:
        """Materialize WriteBack: upper folded into a new lower image."""
        blocks = list(self.lower.blocks)
        for index, data in self.upper.items():
            blocks[index] = data
        return HostDiskImage(blocks=tuple(blocks), block_size=self.lower.block_size,
                             os_label=self.lower.os_label,
                             driver_profile=self.lower.driver_profile)


def effective_profile(disk: Union[HostDiskImage, CowDisk]) -> DriverProfile:
    """Driver profile as the boot loader would see it, config block included."""
    if isinstance(disk, CowDisk):
        block = disk.read_block(CONFIG_BLOCK)
    else:
        block = disk.blocks[CONFIG_BLOCK]
    return DriverProfile.VIRTUAL if block.startswith(VIRTUAL_MARK) \
        else DriverProfile.BARE_METAL


def check_bootable(disk: Union[HostDiskImage, CowDisk]) -> None:
    lower = disk.lower if isinstance(disk, CowDisk) else disk
    if lower.os_label.is_windows and effective_profile(disk) is DriverProfile.BARE_METAL:
        raise DriverMismatchError(
            f"{lower.os_label.value} installed on bare metal needs a repair pass")


def repair_os(disk: HostDiskImage) -> CowDisk:
    """Model the standard repair pass: flip the driver profile in the config
    block inside a fresh COW upper. The lower image is untouched; the delta
    is deterministic so repeated repairs are idempotent."""
    if not (disk.os_label.is_windows
            and effective_profile(disk) is DriverProfile.BARE_METAL):
        raise NotApplicableError(f"{disk.os_label.value} boots without repair")
    cow = CowDisk(disk)
    original = disk.blocks[CONFIG_BLOCK]
    patched = VIRTUAL_MARK + original[len(VIRTUAL_MARK):]
    cow.write_block(CONFIG_BLOCK, patched)
    return cow


def repair_delta_mb(os_label: OsLabel) -> float:
    return REPAIR_DELTA_MB.get(os_label.value, 0.0)


class PersistenceChoice(Enum):
    DISCARD = "discard"
    WRITE_BACK = "write-back"
    STORE_COW = "store-cow"


@dataclass
class HostNymAttachment:
    """The host-OS disk state carried by a host nym record."""

    cow: CowDisk
    policy: PersistenceChoice = PersistenceChoice.DISCARD
    repaired: bool = False
    stored_receipt: Optional[object] = None
    lower_digest_at_store: Optional[str] = field(default=None)


def cow_to_layer_entries(cow: CowDisk) -> dict:
    """Upper blocks as path->bytes entries so a COW can ride the snapshot
    archive format unchanged."""
    return {f"block/{index:08d}": data for index, data in sorted(cow.upper.items())}


def layer_entries_to_upper(entries: dict) -> dict:
    upper = {}
    for path, data in entries.items():
        if not path.startswith("block/"):
            raise HostnymError(f"unexpected path in COW archive: {path}")
        upper[int(path.split("/", 1)[1])] = data
    return upper
