"""Minimal little-endian tensor container used by the CLI.

Layout (all multi-byte fields little-endian):

    offset  size  field
    0       4     magic  = b"ITPT"
    4       2     version, u16 (currently 1)
    6       1     dtype, u8: 0 = f32, 1 = packed_codes
    7       1     rank, u8 (1..8)
    8       4*r   dims, u32 each

    packed_codes only, immediately after dims:
    +0      1     bits, u8 (2, 4, 8 or 16)
    +1      1     axis, u8: 0 = per_channel, 1 = per_token
    +2      4     group_size, u32 (0 = whole axis)
    +6      4     group_count, u32
    +10     8*g   per-group (scale f32, zero_point i32) pairs, row-major
                  over the group grid

    payload:
    f32           product(dims) * 4 bytes, row-major
    packed_codes  ceil(product(dims) * bits / 8) bytes; codes are
                  two's-complement bit fields packed little-endian within each
                  byte, the lowest flat element in the least significant bits

Packed files record only the bit width, so they can carry schemes with the
default signed code range (e.g. {-2,-1,0,1} at 2 bits) and zero points that
fit in an i32; anything else is rejected at write time.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .kv_quant import (
    QuantParams,
    QuantScheme,
    QuantizedCacheLayer,
    collapsed_shape,
    group_grid_shape,
    pack_codes,
    unpack_codes,
)

MAGIC = b"ITPT"
VERSION = 1
DTYPE_F32 = 0
DTYPE_PACKED = 1
MAX_RANK = 8

_AXIS_CODES = {"per_channel": 0, "per_token": 1}
_AXIS_NAMES = {v: k for k, v in _AXIS_CODES.items()}


class TensorFormatError(ValueError):
    """Raised when bytes on disk do not form a valid tensor file."""


def _header(dtype_code: int, dims: tuple[int, ...]) -> bytes:
    if not 1 <= len(dims) <= MAX_RANK:
        raise TensorFormatError(f"rank must be in 1..{MAX_RANK}, got {len(dims)}")
    for n in dims:
        if not 0 < n < 2**32:
            raise TensorFormatError(f"dimension {n} does not fit in u32")
    return (
        MAGIC
        + struct.pack("<HBB", VERSION, dtype_code, len(dims))
        + struct.pack(f"<{len(dims)}I", *dims)
    )


def write_f32(path, array: np.ndarray) -> None:
    """Write a float32 tensor file."""
    array = np.ascontiguousarray(np.asarray(array, dtype=np.float32))
    if array.ndim < 1:
        array = array.reshape(1)
    payload = array.astype("<f4", copy=False).tobytes()
    Path(path).write_bytes(_header(DTYPE_F32, array.shape) + payload)


def write_quantized(path, layer: QuantizedCacheLayer) -> None:
    """Write a packed-codes tensor file for a quantized layer."""
    scheme = layer.scheme
    if scheme.p_min != -(2 ** (scheme.bits - 1)):
        raise TensorFormatError(
            "packed files carry only the bit width; the scheme must use the "
            f"default signed code range, got p_min={scheme.p_min}"
        )
    scale = layer.params.scale
    zero = layer.params.zero_point
    if np.any(np.abs(zero) > np.iinfo(np.int32).max):
        raise TensorFormatError("zero point does not fit in i32")
    scale32 = scale.astype("<f4")
    if not np.all(np.isfinite(scale32)):
        raise TensorFormatError("scale does not fit in f32")
    view = collapsed_shape(layer.original_shape)
    expected_grid = group_grid_shape(view, scheme)
    if scale.shape != expected_grid:
        raise TensorFormatError(
            f"group grid {scale.shape} inconsistent with tensor view {view}"
        )
    group_size = 0 if scheme.group_size is None else scheme.group_size
    header = _header(DTYPE_PACKED, tuple(layer.original_shape))
    header += struct.pack(
        "<BBII", scheme.bits, _AXIS_CODES[scheme.axis], group_size, scale.size
    )
    pairs = np.empty((scale.size, 2), dtype="<u4")
    pairs[:, 0] = scale32.reshape(-1).view("<u4")
    pairs[:, 1] = zero.reshape(-1).astype("<i4").view("<u4")
    payload = pack_codes(layer.codes, scheme.bits).tobytes()
    Path(path).write_bytes(header + pairs.tobytes() + payload)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.blob):
            raise TensorFormatError(f"file truncated while reading {what}")
        out = self.blob[self.offset : self.offset + n]
        self.offset += n
        return out


def load(path) -> np.ndarray | QuantizedCacheLayer:
    """Read a tensor file; returns an f32 array or a QuantizedCacheLayer."""
    reader = _Reader(Path(path).read_bytes())
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, dtype_code, rank = struct.unpack("<HBB", reader.take(4, "header"))
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    if not 1 <= rank <= MAX_RANK:
        raise TensorFormatError(f"rank {rank} out of range 1..{MAX_RANK}")
    dims = struct.unpack(f"<{rank}I", reader.take(4 * rank, "dims"))
    if any(n == 0 for n in dims):
        raise TensorFormatError("zero-sized dimension")
    count = 1
    for n in dims:
        count *= n

    if dtype_code == DTYPE_F32:
        payload = reader.take(4 * count, "f32 payload")
        if reader.offset != len(reader.blob):
            raise TensorFormatError("trailing bytes after payload")
        return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)

    if dtype_code != DTYPE_PACKED:
        raise TensorFormatError(f"unknown dtype code {dtype_code}")
    bits, axis_code, group_size, group_count = struct.unpack(
        "<BBII", reader.take(10, "packed header")
    )
    if axis_code not in _AXIS_NAMES:
        raise TensorFormatError(f"unknown axis code {axis_code}")
    try:
        scheme = QuantScheme(
            bits=bits,
            axis=_AXIS_NAMES[axis_code],
            group_size=None if group_size == 0 else group_size,
        )
        expected_grid = group_grid_shape(collapsed_shape(dims), scheme)
    except ValueError as exc:
        raise TensorFormatError(str(exc)) from exc
    if group_count != expected_grid[0] * expected_grid[1]:
        raise TensorFormatError(
            f"group count {group_count} does not match grid {expected_grid}"
        )
    pairs = np.frombuffer(reader.take(8 * group_count, "group table"), dtype="<u4")
    pairs = pairs.reshape(group_count, 2)
    scale = pairs[:, 0].copy().view("<f4").astype(np.float64).reshape(expected_grid)
    zero = pairs[:, 1].copy().view("<i4").astype(np.int64).reshape(expected_grid)
    if np.any(scale <= 0) or not np.all(np.isfinite(scale)):
        raise TensorFormatError("scales must be positive and finite")
    n_payload = 2 * count if bits == 16 else -(-count // (8 // bits))
    payload = reader.take(n_payload, "packed payload")
    if reader.offset != len(reader.blob):
        raise TensorFormatError("trailing bytes after payload")
    codes = unpack_codes(np.frombuffer(payload, dtype=np.uint8), count, bits)
    try:
        return QuantizedCacheLayer(
            codes=codes.reshape(dims),
            params=QuantParams(scale=scale, zero_point=zero),
            scheme=scheme,
            original_shape=dims,
        )
    except ValueError as exc:
        raise TensorFormatError(str(exc)) from exc
