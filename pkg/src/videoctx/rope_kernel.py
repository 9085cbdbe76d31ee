"""Rotary position embeddings with training-free context-window extension.

Frequencies follow theta[d] = base ** (-2d / head_dim) for d = 0 .. head_dim/2 - 1.
The index is 0-based, so theta[0] == 1.0 and the first coordinate pair rotates
fastest; pairs are adjacent coordinates (2d, 2d+1), not split halves.

Two window-extension modes are supported, both leaving the model weights alone:

* ``linear_interpolation``: position m is rescaled to m * L / L' so that an
  extended sequence of length L' maps back into the pretrained range [0, L).
  Rescaled positions are fractional and are used as-is (rounding would destroy
  the interpolation).
* ``ntk_aware``: the rotary base is enlarged to base * s ** (D / (D - 2)) with
  s = L' / L, stretching the slow bands instead of compressing the indices.

Frequencies and rotation angles are always computed in float64; the rotation
itself is applied in the input vector's own dtype.

All functions are pure; nothing here holds mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODES = ("none", "linear_interpolation", "ntk_aware")


@dataclass(frozen=True)
class RopeConfig:
    """Rotary embedding configuration for one attention head size.

    Attributes:
        head_dim: per-head vector width; must be even (rotations act on pairs).
        pretrained_window: context length the frequencies were tuned for (L).
        target_window: extended context length (L' >= L).
        base: rotary base b; > 1 so frequencies decay across pairs.
        mode: one of ``none``, ``linear_interpolation``, ``ntk_aware``.
    """

    head_dim: int
    pretrained_window: int
    target_window: int
    base: float = 10000.0
    mode: str = "none"

    def __post_init__(self) -> None:
        if self.head_dim < 2 or self.head_dim % 2 != 0:
            raise ValueError(f"head_dim must be even and >= 2, got {self.head_dim}")
        if self.pretrained_window < 1:
            raise ValueError(f"pretrained_window must be positive, got {self.pretrained_window}")
        if self.target_window < self.pretrained_window:
            raise ValueError(
                f"target_window ({self.target_window}) must be >= "
                f"pretrained_window ({self.pretrained_window})"
            )
        if not self.base > 1.0:
            raise ValueError(f"base must be > 1, got {self.base}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def scaling_ratio(self) -> float:
        """Window scaling ratio s = target_window / pretrained_window (>= 1)."""
        return self.target_window / self.pretrained_window


@dataclass(frozen=True)
class FrequencyTable:
    """Per-pair rotation frequencies theta[d], d = 0 .. head_dim/2 - 1."""

    theta: np.ndarray

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.ndim != 1 or theta.size < 1:
            raise ValueError("theta must be a non-empty 1-D vector")
        if not np.all(np.isfinite(theta)) or not np.all(theta > 0.0):
            raise ValueError("theta entries must be finite and positive")
        object.__setattr__(self, "theta", theta)

    @property
    def head_dim(self) -> int:
        return 2 * self.theta.size


@dataclass(frozen=True)
class PositionedVector:
    """A head-dim vector tagged with its (possibly fractional) position."""

    values: np.ndarray
    position: float

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.ndim != 1:
            raise ValueError("values must be a 1-D vector")
        if self.position < 0:
            raise ValueError(f"position must be non-negative, got {self.position}")
        object.__setattr__(self, "values", values)


def ntk_base(config: RopeConfig) -> float:
    """Rescaled rotary base b' = b * s ** (D / (D - 2)) for window ratio s."""
    if config.head_dim <= 2:
        raise ValueError("ntk rescaling needs head_dim > 2 (head_dim - 2 divides the exponent)")
    s = config.scaling_ratio
    return config.base * s ** (config.head_dim / (config.head_dim - 2))


def compute_frequencies(config: RopeConfig) -> FrequencyTable:
    """Build the frequency table theta[d] = effective_base ** (-2d / head_dim).

    The effective base is ``config.base`` in modes ``none`` and
    ``linear_interpolation`` and the enlarged ``ntk_base(config)`` in mode
    ``ntk_aware``. Always evaluated in float64: theta spans several orders of
    magnitude across the table.
    """
    base = ntk_base(config) if config.mode == "ntk_aware" else config.base
    d = np.arange(config.head_dim // 2, dtype=np.float64)
    theta = base ** (-2.0 * d / config.head_dim)
    return FrequencyTable(theta=theta)


def interpolate_position(m: float, config: RopeConfig) -> float:
    """Map raw position m to the position actually fed to the rotation.

    In ``linear_interpolation`` mode returns m * L / L' (fractional results are
    intentional); in the other modes positions pass through unchanged. Exact
    when L == L': (m * L) / L is computed without rounding error for integer m.
    """
    if m < 0:
        raise ValueError(f"position must be non-negative, got {m}")
    if config.mode == "linear_interpolation":
        return m * config.pretrained_window / config.target_window
    return float(m)


def rotate_pairs(values: np.ndarray, positions, freqs: FrequencyTable) -> np.ndarray:
    """Rotate adjacent coordinate pairs of ``values`` by position * theta.

    Args:
        values: array [..., 2 * len(theta)]; the pair (2d, 2d+1) is rotated by
            angle position * theta[d].
        positions: scalar or array broadcastable against values[..., 0].
        freqs: frequency table.

    Returns:
        Rotated array with the same shape and dtype as ``values``.
    """
    values = np.asarray(values)
    theta = freqs.theta
    if values.shape[-1] != 2 * theta.size:
        raise ValueError(
            f"vector length {values.shape[-1]} does not match 2 * {theta.size} frequencies"
        )
    pos = np.asarray(positions, dtype=np.float64)
    angles = pos[..., None] * theta  # [..., head_dim/2], float64
    cos = np.cos(angles).astype(values.dtype, copy=False)
    sin = np.sin(angles).astype(values.dtype, copy=False)
    even = values[..., 0::2]
    odd = values[..., 1::2]
    out = np.empty(np.broadcast_shapes(even.shape, cos.shape) + (2,), dtype=values.dtype)
    out[..., 0] = even * cos - odd * sin
    out[..., 1] = even * sin + odd * cos
    return out.reshape(out.shape[:-2] + (values.shape[-1],))


def apply_rotation(v: PositionedVector, freqs: FrequencyTable) -> np.ndarray:
    """Apply the block-diagonal rotation at the vector's position.

    The caller is responsible for any projection (W x); this rotates the
    already-projected vector. The rotation is orthogonal, so the Euclidean norm
    is preserved up to floating-point rounding.
    """
    return rotate_pairs(v.values, v.position, freqs)
