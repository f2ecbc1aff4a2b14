"""Checkpoint files.

Layout: ``b"ROSECKPT"``, version u8, u32 (LE) length of a UTF-8 JSON block
holding the model config and parameter layout, the JSON block, then each
parameter as little-endian float32 in declaration order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..rvt import atomic_write_bytes
from .config import ModelConfig
from .network import RoseModel

MAGIC = b"ROSECKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(model: RoseModel, extra: dict | None = None) -> bytes:
    layout = [[name, list(p.shape)] for name, p in model.params.items()]
    meta = {"config": model.config.to_dict(), "layout": layout}
    if extra:
        meta["extra"] = extra
    block = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<BI", VERSION, len(block)), block]
    parts += [np.ascontiguousarray(p.data, dtype="<f4").tobytes() for p in model.params.values()]
    return b"".join(parts)


def save_checkpoint(model: RoseModel, path, extra: dict | None = None) -> None:
    atomic_write_bytes(Path(path), encode_checkpoint(model, extra))


def load_checkpoint(path, dtype=np.float32) -> RoseModel:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a ROSE checkpoint")
    if len(buf) < 13:
        raise CheckpointError(f"{path}: truncated header")
    version, n = struct.unpack_from("<BI", buf, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        meta = json.loads(buf[13: 13 + n].decode("utf-8"))
        config = ModelConfig.from_dict(meta["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: bad config block: {exc}") from exc
    model = RoseModel(config, dtype=dtype)
    offset = 13 + n
    for (name, shape), (pname, p) in zip(meta["layout"], model.params.items()):
        if name != pname or tuple(shape) != p.shape:
            raise CheckpointError(f"{path}: layout mismatch at {name} {shape} vs {pname} {p.shape}")
        count = int(np.prod(shape))
        if offset + 4 * count > len(buf):
            raise CheckpointError(f"{path}: truncated parameter data at {name}")
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=offset).reshape(shape)
        p.data = arr.astype(dtype)
        offset += 4 * count
    if offset != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - offset} trailing bytes")
    model.checkpoint_extra = meta.get("extra", {})
    return model
