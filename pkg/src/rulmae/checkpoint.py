"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"RULMAECK"  u32 version
    u64 header length, header bytes (UTF-8 ``key = value`` lines: kind, model
        dims, then the full RunConfig echo)
    u32 record count
    per record: u32 name length, name, u32 ndim, u64 * ndim shape, f64 LE data
    u32 CRC-32 of everything above
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import RunConfig
from .errors import CorruptFile, ShapeMismatch, VersionMismatch
from .features import NormStats
from .model import ModelDims, ModelParams, init_mae_params, init_rul_params

MAGIC = b"RULMAECK"
VERSION = 1
_DIM_KEYS = ("J", "d", "heads", "layers", "K", "P", "ffn_mult", "dropout")


@dataclass
class Checkpoint:
    kind: str  # "mae" or "rul"
    params: ModelParams
    config: RunConfig
    norm: Optional[NormStats] = None


def _template(kind: str, dims: ModelDims) -> ModelParams:
    return init_mae_params(dims, 0) if kind == "mae" else init_rul_params(dims, 0)


def to_bytes(ckpt: Checkpoint) -> bytes:
    dims = ckpt.params.dims
    header = f"kind = {ckpt.kind}\n"
    header += "".join(f"dims.{k} = {getattr(dims, k)!r}\n" for k in _DIM_KEYS)
    header += ckpt.config.to_text()
    hb = header.encode("utf-8")

    records = list(ckpt.params.arrays.items())
    if ckpt.norm is not None:
        records += [
            ("norm.index", np.asarray(ckpt.norm.index, dtype=np.float64)),
            ("norm.min", ckpt.norm.mins),
            ("norm.max", ckpt.norm.maxs),
        ]
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(hb)), hb,
             struct.pack("<I", len(records))]
    for name, arr in records:
        nb = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f8")
        parts.append(struct.pack("<I", len(nb)) + nb)
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptFile("checkpoint is truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def from_bytes(buf: bytes, expect_dims: Optional[ModelDims] = None) -> Checkpoint:
    if len(buf) < len(MAGIC) + 8 or buf[: len(MAGIC)] != MAGIC:
        raise CorruptFile("not a checkpoint file")
    r = _Reader(buf)
    r.take(len(MAGIC))
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, this build reads {VERSION}")
    if len(buf) < 4 or zlib.crc32(buf[:-4]) != struct.unpack("<I", buf[-4:])[0]:
        raise CorruptFile("checkpoint checksum mismatch (truncated or corrupted)")
    (hlen,) = r.unpack("<Q")
    header = r.take(hlen).decode("utf-8")

    meta, cfg_lines = {}, []
    for line in header.splitlines():
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "kind" or key.startswith("dims."):
            meta[key] = val
        else:
            cfg_lines.append(line)
    kind = meta["kind"]
    dims = ModelDims(**{k: (float if k == "dropout" else int)(meta[f"dims.{k}"]) for k in _DIM_KEYS})
    config = RunConfig.from_text("\n".join(cfg_lines))

    (count,) = r.unpack("<I")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = r.unpack("<I")
        name = r.take(nlen).decode("utf-8")
        (ndim,) = r.unpack("<I")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        n = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(r.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(buf) - 4:
        raise CorruptFile("trailing bytes after last record")

    norm = None
    if "norm.index" in arrays:
        norm = NormStats(index=tuple(int(i) for i in arrays.pop("norm.index")),
                         mins=arrays.pop("norm.min"), maxs=arrays.pop("norm.max"))

    if expect_dims is not None:
        for k in _DIM_KEYS:
            if getattr(expect_dims, k) != getattr(dims, k) and k != "dropout":
                raise ShapeMismatch(
                    f"checkpoint has {k}={getattr(dims, k)}, run expects {getattr(expect_dims, k)}"
                )
    template = _template(kind, dims)
    if set(template.arrays) != set(arrays):
        missing = sorted(set(template.arrays) ^ set(arrays))
        raise ShapeMismatch(f"checkpoint groups do not match a {kind} model: {missing[:4]}")
    ordered = {}
    for name, ref in template.arrays.items():
        if arrays[name].shape != ref.shape:
            raise ShapeMismatch(f"{name}: stored {arrays[name].shape}, declared dims need {ref.shape}")
        ordered[name] = arrays[name]
    return Checkpoint(kind=kind, params=ModelParams(dims, ordered), config=config, norm=norm)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load_checkpoint(path, expect_dims: Optional[ModelDims] = None) -> Checkpoint:
    return from_bytes(Path(path).read_bytes(), expect_dims)
