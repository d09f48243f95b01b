"""Binary checkpoint format.

    magic      8 bytes  b"NESTCKPT"
    version    u32
    count      u32      number of tensors
    per tensor:
        name_len u32, name (UTF-8)
        rank     u32, dims u32 * rank
        data     little-endian f32 * prod(dims)

All integers are little-endian.
"""

from __future__ import annotations

import struct
from collections import OrderedDict

import numpy as np

from .. import nn

MAGIC = b"NESTCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dump_tensors(tensors: "OrderedDict[str, np.ndarray]") -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("corrupt: short read")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_tensors(data: bytes) -> "OrderedDict[str, np.ndarray]":
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("corrupt: bad magic")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}")
    count = r.u32()
    tensors: OrderedDict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        try:
            name = r.take(r.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError("corrupt: tensor name is not UTF-8") from exc
        rank = r.u32()
        dims = tuple(r.u32() for _ in range(rank))
        size = int(np.prod(dims, dtype=np.int64))
        arr = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(dims).astype(np.float32)
        tensors[name] = arr
    if r.pos != len(data):
        raise CheckpointError("corrupt: trailing bytes")
    return tensors


def collect(networks: dict[str, nn.Sequential]) -> "OrderedDict[str, np.ndarray]":
    tensors: OrderedDict[str, np.ndarray] = OrderedDict()
    for prefix, net in networks.items():
        for name, p in net.named_parameters():
            tensors[f"{prefix}.{name}"] = p
    return tensors


def save_networks(networks: dict[str, nn.Sequential]) -> bytes:
    return dump_tensors(collect(networks))


def restore(net: nn.Sequential, prefix: str, tensors: dict[str, np.ndarray]) -> None:
    """Copy ``prefix.*`` tensors into ``net``; names and shapes must match exactly."""
    for name, p in net.named_parameters():
        key = f"{prefix}.{name}"
        if key not in tensors:
            raise CheckpointError(f"checkpoint lacks tensor {key!r}")
        if tensors[key].shape != p.shape:
            raise CheckpointError(f"shape mismatch for {key!r}: {tensors[key].shape} vs {p.shape}")
        p[...] = tensors[key]
