"""Binary weight container with bit-exact round-trips.

Layout, all integers little-endian:

    magic   4 bytes  b"PQCW"
    version u32      1
    config  block    u32 d_model, u32 stride_R, u32 num_layers, u32 d_state,
                     u32 num_heads, u8 use_positions,
                     str variant, str trailing_policy   (str = u16 len + utf-8)
    count   u32      number of tensors
    tensor  records  u16 name length, name utf-8, u8 rank, u32 per dim,
                     raw float64 little-endian values, row-major

Tensor records appear in the canonical `weight_shapes` order. Floats are
written byte-for-byte, so save followed by load reproduces every tensor
bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .compressor import CompressorConfig, check_weights, weight_shapes
from .errors import ParseError
from .tensor import Tensor

MAGIC = b"PQCW"
VERSION = 1


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise ParseError(
                f"weight file truncated at byte {self.pos} (wanted {n} more)"
            )
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u16()).decode("utf-8")


def save_weights(
    path: str | Path, cfg: CompressorConfig, weights: dict[str, Tensor]
) -> None:
    check_weights(cfg, weights)
    parts = [
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack(
            "<IIIII",
            cfg.d_model,
            cfg.stride_R,
            cfg.num_layers,
            cfg.d_state,
            cfg.num_heads,
        ),
        struct.pack("<B", 1 if cfg.use_positions else 0),
        _pack_str(cfg.variant),
        _pack_str(cfg.trailing_policy),
        struct.pack("<I", len(weights)),
    ]
    for name in weight_shapes(cfg):
        tensor = weights[name]
        parts.append(_pack_str(name))
        parts.append(struct.pack("<B", len(tensor.shape)))
        for dim in tensor.shape:
            parts.append(struct.pack("<I", dim))
        parts.append(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_weights(path: str | Path) -> tuple[CompressorConfig, dict[str, Tensor]]:
    reader = _Reader(Path(path).read_bytes())
    if reader.take(4) != MAGIC:
        raise ParseError(f"{Path(path).name} is not a weight container (bad magic)")
    version = reader.u32()
    if version != VERSION:
        raise ParseError(f"unsupported weight container version {version}")
    d_model = reader.u32()
    stride_r = reader.u32()
    num_layers = reader.u32()
    d_state = reader.u32()
    num_heads = reader.u32()
    use_positions = bool(reader.u8())
    variant = reader.string()
    trailing = reader.string()
    cfg = CompressorConfig(
        d_model=d_model,
        stride_R=stride_r,
        variant=variant,
        num_layers=num_layers,
        d_state=d_state,
        num_heads=num_heads,
        trailing_policy=trailing,
        use_positions=use_positions,
    )
    count = reader.u32()
    weights: dict[str, Tensor] = {}
    for _ in range(count):
        name = reader.string()
        rank = reader.u8()
        shape = tuple(reader.u32() for _ in range(rank))
        size = int(np.prod(shape)) if shape else 1
        raw = reader.take(size * 8)
        data = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        if name in weights:
            raise ParseError(f"duplicate tensor name {name!r} in weight file")
        weights[name] = Tensor(data, check_finite=False)
    if reader.pos != len(reader.raw):
        raise ParseError(
            f"{len(reader.raw) - reader.pos} trailing bytes after last tensor"
        )
    check_weights(cfg, weights)
    return cfg, weights
