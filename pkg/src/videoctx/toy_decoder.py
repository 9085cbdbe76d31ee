"""Desk-scale autoregressive decoder with a (optionally quantized) KV cache.

This is deliberately tiny and randomly initialized: its job is to exercise the
rotary-interpolation and cache-quantization mechanics inside a real attention
loop, not to produce meaningful text. Architecture: pre-norm blocks with
single-group multi-head attention, a two-layer MLP with a smooth GELU-style
activation, and untied input/output embeddings.

Weights are drawn from a Philox counter-based generator keyed by the spec's
seed, every tensor standard normal scaled by hidden**-0.5, in a fixed order
(embedding; per layer wq, wk, wv, wo, w1, w2; output head), so the same spec
always yields bit-identical weights.

A Decoder is immutable after construction and safe to share across threads;
each KvCache belongs to exactly one decoding session.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import kv_quant
from .kv_quant import QuantScheme, QuantizedCacheLayer
from .rope_kernel import (
    FrequencyTable,
    RopeConfig,
    compute_frequencies,
    interpolate_position,
    rotate_pairs,
)

_NORM_EPS = 1e-6


@dataclass(frozen=True)
class DecoderSpec:
    """Shape and seed of the toy decoder."""

    layers: int
    hidden: int
    heads: int
    vocab: int
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.layers, self.hidden, self.heads, self.vocab) < 1:
            raise ValueError("layers, hidden, heads and vocab must be positive")
        if self.hidden % self.heads != 0:
            raise ValueError(f"hidden ({self.hidden}) must be divisible by heads ({self.heads})")
        if (self.hidden // self.heads) % 2 != 0:
            raise ValueError(f"head_dim ({self.hidden // self.heads}) must be even")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads


@dataclass(frozen=True)
class BlockWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    attn_norm: np.ndarray
    mlp_norm: np.ndarray


@dataclass(frozen=True)
class Decoder:
    spec: DecoderSpec
    embed: np.ndarray
    blocks: tuple[BlockWeights, ...]
    final_norm: np.ndarray
    head: np.ndarray


def init_decoder(spec: DecoderSpec) -> Decoder:
    """Deterministically initialize all weights from the spec's seed."""
    rng = np.random.Generator(np.random.Philox(key=[spec.seed, 0]))
    scale = spec.hidden**-0.5

    def draw(*shape: int) -> np.ndarray:
        return (rng.standard_normal(shape, dtype=np.float32) * scale).astype(np.float32)

    h = spec.hidden
    embed = draw(spec.vocab, h)
    blocks = []
    for _ in range(spec.layers):
        blocks.append(
            BlockWeights(
                wq=draw(h, h),
                wk=draw(h, h),
                wv=draw(h, h),
                wo=draw(h, h),
                w1=draw(h, 4 * h),
                w2=draw(4 * h, h),
                attn_norm=np.ones(h, dtype=np.float32),
                mlp_norm=np.ones(h, dtype=np.float32),
            )
        )
    head = draw(h, spec.vocab)
    return Decoder(
        spec=spec,
        embed=embed,
        blocks=tuple(blocks),
        final_norm=np.ones(h, dtype=np.float32),
        head=head,
    )


def _rms_norm(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    return (x / np.sqrt(np.mean(np.square(x)) + _NORM_EPS)) * weight


def _gelu(x: np.ndarray) -> np.ndarray:
    # tanh approximation; smooth and monotone enough for a toy MLP
    c = np.float32(np.sqrt(2.0 / np.pi))
    return 0.5 * x * (1.0 + np.tanh(c * (x + np.float32(0.044715) * x**3)))


class KvCache:
    """Per-layer key/value storage for one decoding session.

    In ``full_precision`` mode keys and values are float32. In ``quantized``
    mode every appended token is pushed through the quantizer with per-token
    min-max parameters (one group per head), and attention always reads the
    reconstructed values; the original floats are never kept. Reconstruction
    is materialized at append time since per-token parameters never change
    afterwards.
    """

    def __init__(
        self,
        layers: int,
        heads: int,
        head_dim: int,
        capacity: int,
        scheme: QuantScheme | None = None,
    ):
        if capacity < 1:
            raise ValueError("cache capacity must be positive")
        self.layers = layers
        self.heads = heads
        self.head_dim = head_dim
        self.capacity = capacity
        self.scheme = scheme
        self.lengths = [0] * layers
        shape = (capacity, heads, head_dim)
        self._keys = [np.zeros(shape, dtype=np.float32) for _ in range(layers)]
        self._values = [np.zeros(shape, dtype=np.float32) for _ in range(layers)]
        # authoritative quantized storage, one entry per appended token
        self._key_layers: list[list[QuantizedCacheLayer]] = [[] for _ in range(layers)]
        self._value_layers: list[list[QuantizedCacheLayer]] = [[] for _ in range(layers)]

    @property
    def mode(self) -> str:
        return "full_precision" if self.scheme is None else "quantized"

    @property
    def current_length(self) -> int:
        return self.lengths[0] if self.lengths else 0

    def length(self, layer: int) -> int:
        return self.lengths[layer]

    def _store(self, token: np.ndarray) -> tuple[np.ndarray, QuantizedCacheLayer | None]:
        if self.scheme is None:
            return token.astype(np.float32), None
        layer = kv_quant.quantize_with_calibration(token, self.scheme)
        return kv_quant.dequantize(layer).astype(np.float32), layer

    def append(self, layer: int, key: np.ndarray, value: np.ndarray) -> None:
        if key.shape != (self.heads, self.head_dim) or value.shape != key.shape:
            raise ValueError(
                f"expected [heads={self.heads}, head_dim={self.head_dim}] tensors"
            )
        pos = self.lengths[layer]
        if pos >= self.capacity:
            raise ValueError(f"cache full at capacity {self.capacity}")
        k_stored, k_q = self._store(key)
        v_stored, v_q = self._store(value)
        self._keys[layer][pos] = k_stored
        self._values[layer][pos] = v_stored
        if k_q is not None:
            self._key_layers[layer].append(k_q)
            self._value_layers[layer].append(v_q)
        self.lengths[layer] = pos + 1

    def keys(self, layer: int) -> np.ndarray:
        return self._keys[layer][: self.lengths[layer]]

    def values(self, layer: int) -> np.ndarray:
        return self._values[layer][: self.lengths[layer]]


_FREQ_CACHE: dict[RopeConfig, FrequencyTable] = {}


def _freqs_for(rope: RopeConfig) -> FrequencyTable:
    table = _FREQ_CACHE.get(rope)
    if table is None:
        table = _FREQ_CACHE[rope] = compute_frequencies(rope)
    return table


def attention_step(
    decoder: Decoder,
    token_embedding: np.ndarray,
    cache: KvCache,
    rope: RopeConfig,
    layer: int = 0,
) -> tuple[np.ndarray, KvCache]:
    """One causal attention step for a single token at one layer.

    Projects the embedding to q/k/v, rotates q and k at the (possibly
    interpolated) position given by the cache length, appends k/v to the
    cache, and returns the softmax-weighted value readout (heads concatenated,
    before any output projection) together with the updated cache.
    """
    spec = decoder.spec
    pos = cache.length(layer)
    if pos >= rope.target_window:
        raise ValueError(
            f"context overflow: position {pos} does not fit the target window "
            f"{rope.target_window}"
        )
    block = decoder.blocks[layer]
    x = np.asarray(token_embedding, dtype=np.float32)
    q = (x @ block.wq).reshape(spec.heads, spec.head_dim)
    k = (x @ block.wk).reshape(spec.heads, spec.head_dim)
    v = (x @ block.wv).reshape(spec.heads, spec.head_dim)

    freqs = _freqs_for(rope)
    rpos = interpolate_position(pos, rope)
    q = rotate_pairs(q, rpos, freqs)
    k = rotate_pairs(k, rpos, freqs)

    cache.append(layer, k, v)
    keys = cache.keys(layer)      # [L, heads, head_dim]
    values = cache.values(layer)

    scores = np.einsum("hd,lhd->hl", q, keys) / np.float32(np.sqrt(spec.head_dim))
    scores = scores - scores.max(axis=1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=1, keepdims=True)
    out = np.einsum("hl,lhd->hd", weights, values).reshape(spec.hidden)
    return out.astype(np.float32), cache


def forward_step(
    decoder: Decoder, embedding: np.ndarray, cache: KvCache, rope: RopeConfig
) -> np.ndarray:
    """Run one token through the full block stack, returning its hidden state."""
    h = np.asarray(embedding, dtype=np.float32)
    for li, block in enumerate(decoder.blocks):
        attn, _ = attention_step(decoder, _rms_norm(h, block.attn_norm), cache, rope, layer=li)
        h = h + attn @ block.wo
        u = _rms_norm(h, block.mlp_norm)
        h = h + _gelu(u @ block.w1) @ block.w2
    return h


def output_logits(decoder: Decoder, hidden: np.ndarray) -> np.ndarray:
    return _rms_norm(hidden, decoder.final_norm) @ decoder.head


def new_cache(decoder: Decoder, rope: RopeConfig, scheme: QuantScheme | None = None) -> KvCache:
    spec = decoder.spec
    return KvCache(
        layers=spec.layers,
        heads=spec.heads,
        head_dim=spec.head_dim,
        capacity=rope.target_window,
        scheme=scheme,
    )


def _resolve_cache_mode(cache_mode, scheme: QuantScheme | None) -> QuantScheme | None:
    if isinstance(cache_mode, QuantScheme):
        return cache_mode
    if cache_mode == "full_precision":
        if scheme is not None:
            raise ValueError("scheme given but cache_mode is full_precision")
        return None
    if cache_mode == "quantized":
        if scheme is None:
            raise ValueError("quantized cache_mode needs a QuantScheme")
        return scheme
    raise ValueError(f"unknown cache_mode {cache_mode!r}")


def decode_steps(
    decoder: Decoder,
    prompt_tokens: Sequence[int],
    n_out: int,
    rope: RopeConfig,
    cache_mode="full_precision",
    scheme: QuantScheme | None = None,
    visual_prefix: np.ndarray | None = None,
) -> Iterator[dict]:
    """Greedy decoding, yielding one diagnostic record per generated token.

    ``visual_prefix`` rows (pre-projected embeddings, e.g. an interleaved
    token grid flattened frame-major) are consumed before the prompt token
    embeddings; positions run over prefix, prompt and generated tokens
    uniformly. Records carry the generated token, its raw position, the
    position actually rotated by (after interpolation), and the winning logit.
    """
    spec = decoder.spec
    if rope.head_dim != spec.head_dim:
        raise ValueError(
            f"rope head_dim {rope.head_dim} does not match decoder head_dim {spec.head_dim}"
        )
    if n_out < 0:
        raise ValueError("n_out must be non-negative")
    if len(prompt_tokens) == 0:
        raise ValueError("prompt must not be empty")
    prompt = [int(t) for t in prompt_tokens]
    if any(t < 0 or t >= spec.vocab for t in prompt):
        raise ValueError(f"prompt tokens must be in [0, {spec.vocab})")
    prefix = np.empty((0, spec.hidden), dtype=np.float32)
    if visual_prefix is not None:
        prefix = np.asarray(visual_prefix, dtype=np.float32)
        if prefix.ndim != 2 or prefix.shape[1] != spec.hidden:
            raise ValueError(f"visual prefix must be [n, {spec.hidden}]")
    total_in = prefix.shape[0] + len(prompt)
    if total_in + n_out > rope.target_window:
        raise ValueError(
            f"sequence of {total_in} input + {n_out} generated tokens exceeds "
            f"the target window {rope.target_window}"
        )

    cache = new_cache(decoder, rope, _resolve_cache_mode(cache_mode, scheme))
    h = None
    for row in prefix:
        h = forward_step(decoder, row, cache, rope)
    for tok in prompt:
        h = forward_step(decoder, decoder.embed[tok], cache, rope)

    for step in range(n_out):
        logits = output_logits(decoder, h)
        token = int(np.argmax(logits))
        position = cache.current_length  # slot the new token will occupy
        yield {
            "step": step,
            "token": token,
            "position": position,
            "rope_position": interpolate_position(position, rope),
            "max_logit": float(logits[token]),
            "finite": bool(np.all(np.isfinite(logits))),
        }
        if step + 1 < n_out:
            h = forward_step(decoder, decoder.embed[token], cache, rope)


def decode(
    decoder: Decoder,
    prompt_tokens: Sequence[int],
    n_out: int,
    rope: RopeConfig,
    cache_mode="full_precision",
    scheme: QuantScheme | None = None,
    visual_prefix: np.ndarray | None = None,
) -> list[int]:
    """Greedy-decode ``n_out`` tokens; deterministic for fixed inputs."""
    return [
        rec["token"]
        for rec in decode_steps(
            decoder, prompt_tokens, n_out, rope, cache_mode, scheme, visual_prefix
        )
    ]
