"""Post-training asymmetric uniform quantization for key/value cache tensors.

The code/value mapping is

    code = clamp(round(x / S) - Z, p_min, p_max)      (round = half-to-even)
    x_hat = S * (code + Z)

with one scale S and integer zero point Z per quantization group. Note the
sign convention: Z is subtracted before the clamp and added back afterwards,
so Z shifts the clamp window rather than the code origin. It is equivalent to
the more common ``code = clamp(round(x / S) + Z', q_min, q_max)`` form under
Z' = -Z.

Calibration is plain min-max: S = (max - min) / (p_max - p_min), floored at a
tiny power-of-two epsilon for constant groups, and Z = round(min / S) - p_min
so the group minimum lands on code p_min.

Tensors of rank >= 2 are viewed as 2-D ``[tokens, channels]`` with the last
axis as channels and all leading axes collapsed into tokens. Grouping follows
the axis choice:

* ``per_channel``: one (S, Z) per channel per block of ``group_size`` tokens;
* ``per_token``: one (S, Z) per token per block of ``group_size`` channels;
* ``group_size=None`` means the whole of the grouped dimension.

Keys and values are best quantized along different dimensions; the cache
defaults elsewhere in this package are per_channel for keys and per_token for
values, and both axes are available here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

AXES = ("per_channel", "per_token")

SUPPORTED_BITS = (2, 4, 8, 16)

# Scale floor for zero-range groups. A power of two so that the round trip
# S * round(x / S) reproduces constant groups exactly in binary floating point.
SCALE_EPSILON = 2.0 ** -40


@dataclass(frozen=True)
class QuantScheme:
    """Bit width, grouping axis, and integer code range.

    ``p_min``/``p_max`` default to the signed two's-complement range for the
    bit width (e.g. bits=2 gives the bins {-2, -1, 0, 1}); any override must
    still span exactly 2**bits codes.
    """

    bits: int
    axis: str = "per_token"
    group_size: int | None = None
    p_min: int | None = None
    p_max: int | None = None

    def __post_init__(self) -> None:
        if self.bits not in SUPPORTED_BITS:
            raise ValueError(f"bits must be one of {SUPPORTED_BITS}, got {self.bits}")
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.group_size is not None and self.group_size < 1:
            raise ValueError(f"group_size must be positive or None, got {self.group_size}")
        if self.p_min is None:
            object.__setattr__(self, "p_min", -(2 ** (self.bits - 1)))
        if self.p_max is None:
            object.__setattr__(self, "p_max", 2 ** (self.bits - 1) - 1)
        if self.p_max - self.p_min + 1 != 2**self.bits:
            raise ValueError(
                f"[p_min, p_max] = [{self.p_min}, {self.p_max}] does not span "
                f"2**{self.bits} codes"
            )

    @property
    def levels(self) -> int:
        return 2**self.bits


@dataclass(frozen=True)
class QuantParams:
    """Per-group scale and zero point, shaped like the scheme's group grid."""

    scale: np.ndarray
    zero_point: np.ndarray

    def __post_init__(self) -> None:
        scale = np.asarray(self.scale, dtype=np.float64)
        zero_point = np.asarray(self.zero_point, dtype=np.int64)
        if scale.shape != zero_point.shape:
            raise ValueError("scale and zero_point must have identical shapes")
        if not np.all(scale > 0.0):
            raise ValueError("scales must be strictly positive")
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "zero_point", zero_point)


@dataclass(frozen=True)
class QuantizedCacheLayer:
    """Integer codes plus everything needed to reconstruct the tensor."""

    codes: np.ndarray
    params: QuantParams
    scheme: QuantScheme
    original_shape: tuple[int, ...]

    def __post_init__(self) -> None:
        codes = np.asarray(self.codes)
        if not np.issubdtype(codes.dtype, np.integer):
            raise ValueError("codes must be an integer tensor")
        if codes.size and (codes.min() < self.scheme.p_min or codes.max() > self.scheme.p_max):
            raise ValueError("codes fall outside the scheme's [p_min, p_max] range")
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "original_shape", tuple(self.original_shape))


def _group_extent(shape: tuple[int, int], scheme: QuantScheme) -> int:
    """Size of the grouped dimension blocks, resolving the whole-axis default."""
    tokens, channels = shape
    extent = scheme.group_size
    if scheme.axis == "per_token":
        extent = channels if extent is None else extent
        if channels % extent != 0:
            raise ValueError(
                f"group_size {extent} does not divide the channel count {channels}"
            )
    else:
        extent = tokens if extent is None else extent
        if tokens % extent != 0:
            raise ValueError(f"group_size {extent} does not divide the token count {tokens}")
    return extent


def _as_blocks(x: np.ndarray, scheme: QuantScheme) -> tuple[np.ndarray, int]:
    """Reshape [tokens, channels] so the grouped elements share the block axis.

    Returns (blocks, axis) where reducing ``blocks`` over ``axis`` yields the
    group grid: [tokens, channels/g] for per_token, [tokens/g, channels] for
    per_channel.
    """
    tokens, channels = x.shape
    g = _group_extent((tokens, channels), scheme)
    if scheme.axis == "per_token":
        return x.reshape(tokens, channels // g, g), 2
    return x.reshape(tokens // g, g, channels), 1


def group_grid_shape(shape: tuple[int, int], scheme: QuantScheme) -> tuple[int, int]:
    """Shape of the (S, Z) grid for a tensor of the given 2-D shape."""
    tokens, channels = shape
    g = _group_extent((tokens, channels), scheme)
    if scheme.axis == "per_token":
        return (tokens, channels // g)
    return (tokens // g, channels)


def _expand_to(x_shape: tuple[int, int], grid: np.ndarray, scheme: QuantScheme) -> np.ndarray:
    """Broadcast a group grid back over the full tensor shape."""
    tokens, channels = x_shape
    g = _group_extent((tokens, channels), scheme)
    if scheme.axis == "per_token":
        blocks = np.broadcast_to(grid[:, :, None], (tokens, channels // g, g))
    else:
        blocks = np.broadcast_to(grid[:, None, :], (tokens // g, g, channels))
    return blocks.reshape(x_shape)


def collapsed_shape(shape: tuple[int, ...]) -> tuple[int, int]:
    """2-D [tokens, channels] view shape: leading axes collapse into tokens."""
    if len(shape) < 2:
        raise ValueError(f"quantization needs rank >= 2 tensors, got shape {shape}")
    tokens = 1
    for n in shape[:-1]:
        tokens *= n
    return (tokens, shape[-1])


def _check_tensor(x) -> np.ndarray:
    """Validate and return the float64 2-D [tokens, channels] view."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("tensor contains non-finite values")
    return x.reshape(collapsed_shape(x.shape))


def calibrate(samples: Sequence[np.ndarray], scheme: QuantScheme) -> QuantParams:
    """Min-max calibration of per-group scale and zero point.

    Group extrema are pooled over every sample, so all samples must produce
    the same group grid (identical channel counts; identical token counts too
    unless per_channel grouping spans the whole token axis).
    """
    if len(samples) == 0:
        raise ValueError("calibration needs at least one sample")
    mins = maxs = None
    for sample in samples:
        x = _check_tensor(sample)
        blocks, axis = _as_blocks(x, scheme)
        smin = blocks.min(axis=axis)
        smax = blocks.max(axis=axis)
        if mins is None:
            mins, maxs = smin, smax
        else:
            if smin.shape != mins.shape:
                raise ValueError(
                    f"sample group grid {smin.shape} does not match {mins.shape}; "
                    "calibration samples must share the grouping layout"
                )
            np.minimum(mins, smin, out=mins)
            np.maximum(maxs, smax, out=maxs)
    span = scheme.p_max - scheme.p_min
    scale = np.maximum((maxs - mins) / span, SCALE_EPSILON)
    anchor = np.rint(mins / scale)
    if np.any(np.abs(anchor) >= 2.0**62):
        raise ValueError("group dynamic range too extreme for integer zero points")
    zero_point = anchor.astype(np.int64) - scheme.p_min
    return QuantParams(scale=scale, zero_point=zero_point)


def quantize(tensor: np.ndarray, params: QuantParams, scheme: QuantScheme) -> QuantizedCacheLayer:
    """Map a float tensor to clamped integer codes.

    ``code = clamp(round_half_even(x / S) - Z, p_min, p_max)`` elementwise,
    with (S, Z) broadcast from the group grid. Codes always land inside
    [p_min, p_max] for any finite input.
    """
    original_shape = np.asarray(tensor).shape
    x = _check_tensor(tensor)
    grid_shape = group_grid_shape(x.shape, scheme)
    if params.scale.shape != grid_shape:
        raise ValueError(
            f"params grid {params.scale.shape} does not match tensor's group grid {grid_shape}"
        )
    scale = _expand_to(x.shape, params.scale, scheme)
    zero = _expand_to(x.shape, params.zero_point.astype(np.float64), scheme)
    codes = np.rint(x / scale) - zero
    np.clip(codes, scheme.p_min, scheme.p_max, out=codes)
    return QuantizedCacheLayer(
        codes=codes.astype(np.int16).reshape(original_shape),
        params=params,
        scheme=scheme,
        original_shape=original_shape,
    )


def dequantize(layer: QuantizedCacheLayer) -> np.ndarray:
    """Reconstruct ``x_hat = S * (code + Z)``, shaped like the original tensor."""
    if layer.codes.shape != layer.original_shape:
        raise ValueError("codes shape does not match original_shape")
    view = collapsed_shape(layer.original_shape)
    codes = layer.codes.reshape(view).astype(np.float64)
    scale = _expand_to(view, layer.params.scale, layer.scheme)
    zero = _expand_to(view, layer.params.zero_point.astype(np.float64), layer.scheme)
    return (scale * (codes + zero)).reshape(layer.original_shape)


def quantize_with_calibration(
    tensor: np.ndarray, scheme: QuantScheme, calibration: Sequence[np.ndarray] | None = None
) -> QuantizedCacheLayer:
    """Calibrate (on ``calibration`` or the tensor itself) and quantize."""
    samples = [tensor] if calibration is None else list(calibration)
    return quantize(tensor, calibrate(samples, scheme), scheme)


def roundtrip_error(tensor: np.ndarray, layer: QuantizedCacheLayer) -> dict[str, float]:
    """Max and mean absolute reconstruction error against the source tensor."""
    err = np.abs(np.asarray(tensor, dtype=np.float64) - dequantize(layer))
    return {"max_abs_error": float(err.max()), "mean_abs_error": float(err.mean())}


# --- packed code streams ----------------------------------------------------
#
# 2- and 4-bit codes are packed into bytes as two's-complement bit fields,
# little-endian within the byte: the element with the lowest flat index sits
# in the least significant bits. 8-bit codes are single int8 bytes and 16-bit
# codes are int16 little-endian. Packing requires the scheme's default signed
# code range, since only the bit width is recorded alongside the stream.


def pack_codes(codes: np.ndarray, bits: int) -> np.ndarray:
    """Pack integer codes into a uint8 byte stream (flat, C order)."""
    if bits not in SUPPORTED_BITS:
        raise ValueError(f"bits must be one of {SUPPORTED_BITS}, got {bits}")
    flat = np.asarray(codes).reshape(-1)
    lo, hi = -(2 ** (bits - 1)), 2 ** (bits - 1) - 1
    if flat.size and (flat.min() < lo or flat.max() > hi):
        raise ValueError(f"codes outside the signed {bits}-bit range [{lo}, {hi}]")
    if bits == 16:
        return flat.astype("<i2").view(np.uint8)
    unsigned = (flat.astype(np.int64) & ((1 << bits) - 1)).astype(np.uint8)
    if bits == 8:
        return unsigned
    per_byte = 8 // bits
    pad = (-flat.size) % per_byte
    if pad:
        unsigned = np.concatenate([unsigned, np.zeros(pad, dtype=np.uint8)])
    unsigned = unsigned.reshape(-1, per_byte)
    shifts = np.arange(per_byte, dtype=np.uint8) * bits
    return np.bitwise_or.reduce(unsigned << shifts, axis=1).astype(np.uint8)


def unpack_codes(buf: np.ndarray, count: int, bits: int) -> np.ndarray:
    """Inverse of :func:`pack_codes`; returns int16 codes of length ``count``."""
    if bits not in SUPPORTED_BITS:
        raise ValueError(f"bits must be one of {SUPPORTED_BITS}, got {bits}")
    buf = np.asarray(buf, dtype=np.uint8)
    if bits == 16:
        if buf.size != 2 * count:
            raise ValueError(f"expected {2 * count} bytes for {count} 16-bit codes, got {buf.size}")
        return buf.view("<i2").astype(np.int16)
    per_byte = 8 // bits
    needed = -(-count // per_byte)
    if buf.size != needed:
        raise ValueError(f"expected {needed} bytes for {count} {bits}-bit codes, got {buf.size}")
    if bits == 8:
        return buf.view(np.int8).astype(np.int16)
    shifts = np.arange(per_byte, dtype=np.uint8) * bits
    fields = (buf[:, None] >> shifts) & ((1 << bits) - 1)
    fields = fields.reshape(-1)[:count].astype(np.int16)
    sign_bit = 1 << (bits - 1)
    return np.where(fields >= sign_bit, fields - (1 << bits), fields).astype(np.int16)
