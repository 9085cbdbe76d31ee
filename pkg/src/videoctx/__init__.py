"""Training-free context extension toolkit for video LLMs.

Modules:
    rope_kernel        rotary embeddings, linear and NTK-aware window extension
    frame_rearrange    strided frame scheduling around a fixed-capacity encoder
    kv_quant           post-training KV-cache quantization
    toy_decoder        desk-scale decoder wiring the mechanisms together
    roofline_analyzer  memory-bound decode cost model
    tensorfile         little-endian tensor container used by the CLI
    cli_io             the ``videoctx`` command-line interface
"""

from .frame_rearrange import (
    RearrangePlan,
    TokenGrid,
    interleave_tokens,
    mock_encode,
    plan_subsequences,
    sample_frame_indices,
    split_by_plan,
)
from .kv_quant import (
    QuantParams,
    QuantScheme,
    QuantizedCacheLayer,
    calibrate,
    dequantize,
    quantize,
)
from .roofline_analyzer import (
    CostReport,
    HardwareSpec,
    ModelSpec,
    analyze,
    decode_ops,
    decode_time_ms,
    kv_bytes,
    total_memory,
)
from .rope_kernel import (
    FrequencyTable,
    PositionedVector,
    RopeConfig,
    apply_rotation,
    compute_frequencies,
    interpolate_position,
    ntk_base,
)
from .toy_decoder import Decoder, DecoderSpec, KvCache, attention_step, decode, init_decoder

__version__ = "0.1.0"

__all__ = [
    "RearrangePlan",
    "TokenGrid",
    "interleave_tokens",
    "mock_encode",
    "plan_subsequences",
    "sample_frame_indices",
    "split_by_plan",
    "QuantParams",
    "QuantScheme",
    "QuantizedCacheLayer",
    "calibrate",
    "dequantize",
    "quantize",
    "CostReport",
    "HardwareSpec",
    "ModelSpec",
    "analyze",
    "decode_ops",
    "decode_time_ms",
    "kv_bytes",
    "total_memory",
    "FrequencyTable",
    "PositionedVector",
    "RopeConfig",
    "apply_rotation",
    "compute_frequencies",
    "interpolate_position",
    "ntk_base",
    "Decoder",
    "DecoderSpec",
    "KvCache",
    "attention_step",
    "decode",
    "init_decoder",
]
