"""RVT: a raw video/mask container.

Layout (little-endian)::

    magic    4s   b"RVT1"
    version  u8   1
    frames   u32
    height   u32
    width    u32
    channels u32
    dtype    u8   0 = u8 (0..255), 1 = float32
    payload  frames*height*width*channels*itemsize bytes, (F, H, W, C) C-order
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"RVT1"
VERSION = 1
HEADER = struct.Struct("<4sB4IB")
DTYPES = {0: np.dtype(np.uint8), 1: np.dtype("<f4")}


class RvtError(ValueError):
    """Malformed or unreadable RVT data."""


class TruncatedPayload(RvtError):
    pass


@dataclass(frozen=True)
class RvtHeader:
    frames: int
    height: int
    width: int
    channels: int
    dtype: int
    version: int = VERSION

    @property
    def payload_bytes(self) -> int:
        return self.frames * self.height * self.width * self.channels * DTYPES[self.dtype].itemsize

    def pack(self) -> bytes:
        return HEADER.pack(MAGIC, self.version, self.frames, self.height, self.width, self.channels, self.dtype)


def parse_header(buf: bytes) -> RvtHeader:
    if len(buf) < HEADER.size:
        raise TruncatedPayload(f"truncated header: {len(buf)} of {HEADER.size} bytes")
    magic, version, f, h, w, c, dt = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise RvtError(f"bad magic {magic!r}")
    if version != VERSION:
        raise RvtError(f"unsupported version {version}")
    if dt not in DTYPES:
        raise RvtError(f"unknown dtype tag {dt}")
    if min(f, h, w, c) < 1:
        raise RvtError(f"extents must be >= 1, got {(f, h, w, c)}")
    return RvtHeader(f, h, w, c, dt, version)


def decode(buf: bytes) -> tuple[RvtHeader, np.ndarray]:
    """Parse a full RVT byte string into (header, raw array)."""
    header = parse_header(buf)
    need = header.payload_bytes
    have = len(buf) - HEADER.size
    if have < need:
        raise TruncatedPayload(f"truncated payload: {have} of {need} bytes")
    if have > need:
        raise RvtError(f"{have - need} trailing bytes after payload")
    arr = np.frombuffer(buf, dtype=DTYPES[header.dtype], offset=HEADER.size, count=need // DTYPES[header.dtype].itemsize)
    return header, arr.reshape(header.frames, header.height, header.width, header.channels)


def encode(array: np.ndarray) -> bytes:
    arr = np.asarray(array)
    if arr.ndim == 3:
        arr = arr[..., None]
    if arr.ndim != 4 or 0 in arr.shape:
        raise RvtError(f"expected (F, H, W[, C]) array, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        tag = 0
    elif arr.dtype in (np.float32, np.float64):
        tag = 1
        arr = arr.astype("<f4")
    else:
        raise RvtError(f"unsupported array dtype {arr.dtype}")
    header = RvtHeader(*arr.shape, dtype=tag)
    return header.pack() + np.ascontiguousarray(arr).tobytes()


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def rvt_write(path, payload: np.ndarray) -> None:
    """Write a video ((F, H, W, C) float in [0, 1] or uint8) or a bool mask (F, H, W).

    Float videos are stored as float32; masks as one u8 channel of 0/255.
    """
    arr = np.asarray(payload)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    atomic_write_bytes(path, encode(arr))


def rvt_read(path) -> tuple[RvtHeader, np.ndarray]:
    """Raw read: header plus the stored array (uint8 or float32)."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise RvtError(f"cannot read {path}: {exc}") from exc
    return decode(buf)


def read_video(path) -> np.ndarray:
    header, arr = rvt_read(path)
    if header.dtype == 0:
        return arr.astype(np.float32) / 255.0
    return arr.astype(np.float32)


def read_mask(path) -> np.ndarray:
    header, arr = rvt_read(path)
    return mask_from_array(header, arr)


def mask_from_array(header: RvtHeader, arr: np.ndarray) -> np.ndarray:
    if header.channels != 1 or header.dtype != 0:
        raise RvtError(f"mask must be 1-channel u8, got {header.channels} channels, dtype {header.dtype}")
    bad = (arr != 0) & (arr != 255)
    if bad.any():
        raise RvtError(f"mask contains values outside {{0, 255}}: {np.unique(arr[bad])[:5].tolist()}")
    return arr[..., 0] == 255
