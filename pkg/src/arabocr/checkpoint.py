"""Binary checkpoint files.

Layout (little-endian)::

    b"ATRC"  u32 version
    u32 config length, UTF-8 JSON config (network config + metadata)
    u32 tensor count, then per tensor: u16 name length, UTF-8 name,
        u8 dtype code, u8 rank, rank x u32 extents
    tensor payloads in directory order
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from arabocr.ctc import Alphabet
from arabocr.model import CRNN, NetworkConfig

MAGIC = b"ATRC"
VERSION = 1
DTYPES = {1: np.dtype("<f4")}
DTYPE_CODES = {v: k for k, v in DTYPES.items()}


class CheckpointError(ValueError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    config: NetworkConfig
    tensors: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)
    version: int = VERSION

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet(self.config.alphabet)


def from_model(model: CRNN, metadata: dict | None = None) -> Checkpoint:
    tensors = {k: np.asarray(v, dtype="<f4").copy() for k, v in model.state_arrays().items()}
    return Checkpoint(model.config, tensors, dict(metadata or {}))


def to_model(ckpt: Checkpoint, dtype=np.float32) -> CRNN:
    model = CRNN(ckpt.config, seed=0, dtype=dtype)
    model.load_state_arrays({k: v.astype(dtype) for k, v in ckpt.tensors.items()})
    return model


def dumps(ckpt: Checkpoint) -> bytes:
    header = json.dumps(
        {"network": ckpt.config.to_dict(), "metadata": ckpt.metadata},
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    ).encode("utf-8")
    out = [MAGIC, struct.pack("<I", ckpt.version), struct.pack("<I", len(header)), header]
    out.append(struct.pack("<I", len(ckpt.tensors)))
    payloads = []
    for name, arr in ckpt.tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<BB", DTYPE_CODES[arr.dtype], arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        payloads.append(arr.tobytes())
    return b"".join(out + payloads)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(
                f"checkpoint truncated: needed {n} bytes at offset {self.pos}, file has {len(self.data)}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))


def loads(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if len(data) < 4 or data[:4] != MAGIC:
        if len(data) < 4 and MAGIC.startswith(data):
            raise TruncatedCheckpointError("checkpoint truncated inside the magic bytes")
        raise CorruptCheckpointError("not a checkpoint: bad magic bytes")
    r.take(4)
    (version,) = r.unpack("I")
    if version != VERSION:
        raise UnsupportedVersionError(f"checkpoint version {version} is not supported (expected {VERSION})")
    (n,) = r.unpack("I")
    try:
        header = json.loads(r.take(n).decode("utf-8"))
        config = NetworkConfig.from_dict(header["network"])
        metadata = header.get("metadata", {})
    except TruncatedCheckpointError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpointError(f"unreadable config block: {exc}") from exc
    (count,) = r.unpack("I")
    directory = []
    for _ in range(count):
        (ln,) = r.unpack("H")
        name = r.take(ln).decode("utf-8")
        code, rank = r.unpack("BB")
        if code not in DTYPES:
            raise CorruptCheckpointError(f"tensor {name!r} has unknown dtype code {code}")
        shape = r.unpack(f"{rank}I") if rank else ()
        directory.append((name, DTYPES[code], shape))
    tensors = {}
    for name, dtype, shape in directory:
        if name in tensors:
            raise CorruptCheckpointError(f"tensor {name!r} appears twice")
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        tensors[name] = np.frombuffer(r.take(size), dtype=dtype).reshape(shape).copy()
    if r.pos != len(data):
        raise CorruptCheckpointError(f"{len(data) - r.pos} unexpected trailing bytes")
    return Checkpoint(config, tensors, metadata, version)


def save(ckpt: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(ckpt))
    tmp.replace(path)


def load(path: str | Path) -> Checkpoint:
    return loads(Path(path).read_bytes())
