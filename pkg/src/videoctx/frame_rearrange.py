"""Strided frame scheduling for a fixed-capacity video encoder.

An encoder that only accepts N frames per pass can still cover m*N frames:
split the frame list into m stride-m subsequences (subsequence i takes frames
i, m+i, 2m+i, ...), push each subsequence through the frozen encoder
separately, then interleave the per-subsequence token blocks back into
absolute chronological order. Splitting and interleaving are exact inverses,
so token content is never altered, only reordered.

Frame indices are 1-based throughout, matching how frame numbers are usually
written; tensors are indexed 0-based internally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class RearrangePlan:
    """The m-way strided decomposition of ``total_frames`` frames.

    ``subsequences[i-1]`` holds the 1-based frame indices assigned to encoder
    pass i; together the subsequences partition {1, ..., total_frames}.
    """

    total_frames: int
    encoder_capacity: int
    multiplier: int
    subsequences: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class TokenGrid:
    """Visual tokens as a [frames, tokens_per_frame, dim] float32 tensor."""

    frames: int
    tokens_per_frame: int
    dim: int
    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float32)
        if data.shape != (self.frames, self.tokens_per_frame, self.dim):
            raise ValueError(
                f"data shape {data.shape} does not match declared "
                f"({self.frames}, {self.tokens_per_frame}, {self.dim})"
            )
        if min(self.frames, self.tokens_per_frame, self.dim) < 1:
            raise ValueError("frames, tokens_per_frame and dim must all be positive")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, data: np.ndarray) -> "TokenGrid":
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"token grid must be rank 3, got rank {data.ndim}")
        return cls(frames=data.shape[0], tokens_per_frame=data.shape[1], dim=data.shape[2], data=data)

    def flatten_tokens(self) -> np.ndarray:
        """Frame-major [frames * tokens_per_frame, dim] view of the tokens."""
        return self.data.reshape(self.frames * self.tokens_per_frame, self.dim)


def plan_subsequences(total_frames: int, encoder_capacity: int) -> RearrangePlan:
    """Partition 1..total_frames into stride-m subsequences of capacity frames.

    Subsequence i (1-based) is {i, m+i, 2m+i, ..., total_frames - m + i} with
    m = total_frames / encoder_capacity. Frame counts that are not an exact
    multiple of the capacity are rejected; padding would silently change the
    temporal semantics.
    """
    if total_frames < 1 or encoder_capacity < 1:
        raise ValueError("total_frames and encoder_capacity must be positive")
    if total_frames % encoder_capacity != 0:
        raise ValueError(
            f"total_frames ({total_frames}) is not divisible by "
            f"encoder_capacity ({encoder_capacity})"
        )
    m = total_frames // encoder_capacity
    subsequences = tuple(
        tuple(range(i, total_frames - m + i + 1, m)) for i in range(1, m + 1)
    )
    return RearrangePlan(
        total_frames=total_frames,
        encoder_capacity=encoder_capacity,
        multiplier=m,
        subsequences=subsequences,
    )


def split_by_plan(grid: TokenGrid, plan: RearrangePlan) -> list[TokenGrid]:
    """Extract each subsequence's frames from a chronological grid.

    Returns the m grids the fixed-capacity encoder would be fed, in
    subsequence order. Inverse of :func:`interleave_tokens`.
    """
    if grid.frames != plan.total_frames:
        raise ValueError(
            f"grid has {grid.frames} frames but plan covers {plan.total_frames}"
        )
    return [
        TokenGrid(
            frames=plan.encoder_capacity,
            tokens_per_frame=grid.tokens_per_frame,
            dim=grid.dim,
            data=grid.data[np.asarray(sub) - 1],
        )
        for sub in plan.subsequences
    ]


def interleave_tokens(groups: Sequence[TokenGrid], plan: RearrangePlan) -> TokenGrid:
    """Merge per-subsequence token grids back into chronological frame order.

    ``groups[i]`` must hold the encoder output for subsequence i+1, one block
    of tokens per frame, in subsequence order. The output places each frame's
    block at the frame's absolute position, so flattening the result
    frame-major yields tokens in strict chronological order. Token order
    within a frame is untouched.
    """
    if len(groups) != plan.multiplier:
        raise ValueError(f"expected {plan.multiplier} groups, got {len(groups)}")
    first = groups[0]
    for g in groups:
        if g.frames != plan.encoder_capacity:
            raise ValueError(
                f"every group must have {plan.encoder_capacity} frames, got {g.frames}"
            )
        if (g.tokens_per_frame, g.dim) != (first.tokens_per_frame, first.dim):
            raise ValueError("groups disagree on tokens_per_frame or dim")
    out = np.empty(
        (plan.total_frames, first.tokens_per_frame, first.dim), dtype=np.float32
    )
    for group, sub in zip(groups, plan.subsequences):
        out[np.asarray(sub) - 1] = group.data
    return TokenGrid(
        frames=plan.total_frames,
        tokens_per_frame=first.tokens_per_frame,
        dim=first.dim,
        data=out,
    )


def sample_frame_indices(video_length: int, count: int) -> list[int]:
    """Pick ``count`` frame indices spread uniformly over [1, video_length].

    Uses centered strata: idx_j = floor((j + 0.5) * video_length / count) + 1
    for j = 0..count-1. Deterministic, symmetric about the video midpoint, and
    strictly increasing whenever count <= video_length.
    """
    if video_length < 1 or count < 1:
        raise ValueError("video_length and count must be positive")
    if count > video_length:
        raise ValueError(
            f"cannot sample {count} distinct frames from a video of length {video_length}"
        )
    return [int((2 * j + 1) * video_length // (2 * count)) + 1 for j in range(count)]


def mock_encode(
    frame_indices: Sequence[int],
    tokens_per_frame: int = 256,
    dim: int = 32,
    seed: int = 0,
) -> TokenGrid:
    """Deterministic stand-in for a frozen video encoder + projector.

    Each frame's token block is drawn from a counter-based generator keyed by
    (seed, absolute frame index), so a frame encodes to the same block no
    matter which subsequence it appears in. This is exactly the property the
    interleaving contract needs from the real (frozen) encoder.
    """
    blocks = []
    for idx in frame_indices:
        if idx < 1:
            raise ValueError(f"frame indices are 1-based, got {idx}")
        rng = np.random.Generator(np.random.Philox(key=[seed, int(idx)]))
        blocks.append(rng.standard_normal((tokens_per_frame, dim), dtype=np.float32))
    return TokenGrid(
        frames=len(frame_indices),
        tokens_per_frame=tokens_per_frame,
        dim=dim,
        data=np.stack(blocks),
    )
