"""Independent reference implementations used as test oracles.

Everything here is deliberately written against the math, not against the
package internals: high-precision scalar evaluation via mpmath, pure-python
scalar loops, and a one-shot masked-attention forward pass. Test modules
compare the package against these.
"""

import math

import mpmath
import numpy as np

mpmath.mp.dps = 50


def hp_theta(base: float, head_dim: int, d: int) -> float:
    """High-precision theta_d = base ** (-2d / head_dim)."""
    return float(mpmath.power(mpmath.mpf(base), mpmath.mpf(-2 * d) / head_dim))


def hp_ntk_base(base: float, scale: float, head_dim: int) -> float:
    """High-precision b' = b * s ** (D / (D - 2))."""
    return float(
        mpmath.mpf(base) * mpmath.power(mpmath.mpf(scale), mpmath.mpf(head_dim) / (head_dim - 2))
    )


def scalar_quant_pipeline(x: float, scale: float, zero: int, p_min: int, p_max: int):
    """One value through quantize + dequantize, plain python arithmetic.

    python's round() is round-half-to-even, matching the vectorized path.
    Returns (code, reconstructed value).
    """
    code = round(float(x) / float(scale)) - zero
    code = min(max(code, p_min), p_max)
    return code, float(scale) * (code + zero)


def stride_subsequences(total: int, capacity: int) -> list[list[int]]:
    """Brute-force enumeration of the stride rule, 1-based."""
    m = total // capacity
    return [[i + m * j for j in range(capacity)] for i in range(1, m + 1)]


def interleave_by_map(groups, plan) -> np.ndarray:
    """Frame->block map assembled per group, then read out in sorted order."""
    blocks = {}
    for grid, sub in zip(groups, plan.subsequences):
        for row, frame in enumerate(sub):
            blocks[frame] = grid.data[row]
    return np.stack([blocks[f] for f in sorted(blocks)])


def full_attention_forward(decoder, token_ids, rope) -> np.ndarray:
    """One-shot forward over a whole prompt with an explicit causal mask.

    Recomputes everything from scratch (no cache), returning the final hidden
    state of every position as [T, hidden] float32.
    """
    from videoctx.rope_kernel import compute_frequencies, interpolate_position, rotate_pairs

    spec = decoder.spec
    T = len(token_ids)
    freqs = compute_frequencies(rope)
    positions = np.array([interpolate_position(i, rope) for i in range(T)])
    mask = np.triu(np.full((T, T), -np.inf, dtype=np.float32), k=1)

    def rms(rows, weight):
        return rows / np.sqrt(np.mean(np.square(rows), axis=-1, keepdims=True) + 1e-6) * weight

    def gelu(x):
        c = np.float32(np.sqrt(2.0 / np.pi))
        return 0.5 * x * (1.0 + np.tanh(c * (x + np.float32(0.044715) * x**3)))

    h = decoder.embed[np.asarray(token_ids)].astype(np.float32)
    for block in decoder.blocks:
        xn = rms(h, block.attn_norm)
        q = (xn @ block.wq).reshape(T, spec.heads, spec.head_dim)
        k = (xn @ block.wk).reshape(T, spec.heads, spec.head_dim)
        v = (xn @ block.wv).reshape(T, spec.heads, spec.head_dim)
        q = rotate_pairs(q, positions[:, None], freqs)
        k = rotate_pairs(k, positions[:, None], freqs)
        scores = np.einsum("qhd,khd->hqk", q, k) / np.float32(math.sqrt(spec.head_dim))
        scores = scores + mask
        scores = scores - scores.max(axis=2, keepdims=True)
        w = np.exp(scores)
        w /= w.sum(axis=2, keepdims=True)
        attn = np.einsum("hqk,khd->qhd", w, v).reshape(T, spec.hidden)
        h = h + attn @ block.wo
        h = h + gelu(rms(h, block.mlp_norm) @ block.w1) @ block.w2
    return h
