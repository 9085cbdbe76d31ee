"""Roofline-style decode cost model for long-video token budgets.

Batch-1 autoregressive decoding is memory-bound: every generated token streams
the transformer-block weights plus the whole KV cache through the memory
system, so per-token latency is (bytes touched) / (effective bandwidth). The
model here reports, per (frame count, KV bit width) configuration:

* total operations for a generation of ``n_out`` tokens,
* per-token decode latency from the memory-bound roofline,
* total resident memory (weights + activation overhead + KV cache),
* KV cache footprint.

Conventions: decimal units (GB = 1e9 bytes, T = 1e12 ops) and batch size 1.
KV bytes count codes only; per-group scale/zero-point metadata is excluded so
the footprint scales exactly with the bit width.

The bundled ``vicuna-7b`` profile counts the decoder-block parameters of the
7B-class architecture (32 layers, hidden 4096, FFN 11008), i.e. the weights
actually streamed per decode step; together with the bundled ``a100`` profile
(effective bandwidth 0.751 TB/s) it reproduces the reference cost table these
defaults were calibrated against.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import MISSING, dataclass, fields
from importlib import resources
from pathlib import Path

_GB = 1e9


class ProfileError(ValueError):
    """Raised when a model/hardware profile document is malformed."""


@dataclass(frozen=True)
class ModelSpec:
    """Backbone shape and memory constants for the cost model.

    ``n_params`` should count the weights streamed per decode step (the
    transformer blocks); ``activation_overhead_bytes`` is a calibration
    constant covering everything resident besides weights and KV cache.
    """

    n_params: float
    layers: int
    hidden: int
    weight_bytes_per_param: float = 2.0  # FP16
    tokens_per_frame: int = 256
    activation_overhead_bytes: float = 0.0

    def __post_init__(self) -> None:
        if min(self.n_params, self.layers, self.hidden, self.weight_bytes_per_param) <= 0:
            raise ValueError("n_params, layers, hidden and weight_bytes_per_param must be positive")
        if self.tokens_per_frame < 0:
            raise ValueError("tokens_per_frame must be non-negative")
        if self.activation_overhead_bytes < 0:
            raise ValueError("activation_overhead_bytes must be non-negative")

    @property
    def weight_bytes(self) -> float:
        return self.n_params * self.weight_bytes_per_param


@dataclass(frozen=True)
class HardwareSpec:
    """Peak device numbers plus an achieved-bandwidth efficiency fraction."""

    peak_compute: float
    peak_bandwidth: float
    bandwidth_efficiency: float = 1.0

    def __post_init__(self) -> None:
        if self.peak_compute <= 0 or self.peak_bandwidth <= 0:
            raise ValueError("peak_compute and peak_bandwidth must be positive")
        if not 0.0 < self.bandwidth_efficiency <= 1.0:
            raise ValueError("bandwidth_efficiency must be in (0, 1]")

    @property
    def effective_bandwidth(self) -> float:
        return self.peak_bandwidth * self.bandwidth_efficiency


@dataclass(frozen=True)
class CostReport:
    """One analyzed configuration (one row of the cost table)."""

    frames: int
    kv_bits: int
    ops_total: float
    decode_time_ms: float
    total_memory_bytes: float
    kv_bytes: float

    def __post_init__(self) -> None:
        if min(self.frames, self.kv_bits) < 0 or min(
            self.ops_total, self.decode_time_ms, self.total_memory_bytes, self.kv_bytes
        ) < 0:
            raise ValueError("cost report fields must be non-negative")
        if self.kv_bytes > self.total_memory_bytes:
            raise ValueError("kv_bytes cannot exceed total_memory_bytes")


def kv_bytes(model: ModelSpec, seq_len: int, bits: int) -> float:
    """KV cache footprint: 2 (K and V) * layers * hidden * seq_len * bits/8.

    Batch 1; scale/zero-point metadata excluded, so the result is exactly
    linear in both ``seq_len`` and ``bits``.
    """
    if seq_len < 0 or bits <= 0:
        raise ValueError("seq_len must be non-negative and bits positive")
    return 2.0 * model.layers * model.hidden * seq_len * bits / 8.0


def decode_ops(model: ModelSpec, seq_len: int, n_out: int) -> float:
    """Total operations to generate ``n_out`` tokens against a ``seq_len`` prompt.

    Per generated token: 2 * n_params weight FLOPs plus 4 * layers * hidden *
    context attention FLOPs (score and value products against the cache). The
    context grows by one per generated token, so its mean over the generation
    is seq_len + n_out / 2.
    """
    if seq_len < 0 or n_out < 0:
        raise ValueError("seq_len and n_out must be non-negative")
    if n_out == 0:
        return 0.0
    seq_len_avg = seq_len + n_out / 2.0
    return n_out * (2.0 * model.n_params + 4.0 * model.layers * model.hidden * seq_len_avg)


def total_memory(model: ModelSpec, seq_len: int, bits: int) -> float:
    """Resident bytes: weights + activation overhead + KV cache."""
    return model.weight_bytes + model.activation_overhead_bytes + kv_bytes(model, seq_len, bits)


def decode_time_ms(total_memory_bytes: float, hw: HardwareSpec) -> float:
    """Per-token decode latency under the memory-bound roofline, in ms."""
    if total_memory_bytes < 0:
        raise ValueError("total_memory_bytes must be non-negative")
    return total_memory_bytes / hw.effective_bandwidth * 1e3


def compute_time_ms(ops_per_token: float, hw: HardwareSpec) -> float:
    """Compute-bound latency per token, in ms; reported as a sanity check.

    For batch-1 decode this sits orders of magnitude below the memory term,
    which is why :func:`decode_time_ms` ignores it.
    """
    return ops_per_token / hw.peak_compute * 1e3


def analyze(
    model: ModelSpec,
    hw: HardwareSpec,
    frame_counts: list[int],
    bit_widths: list[int],
    n_out: int = 1000,
) -> list[CostReport]:
    """One CostReport per (frames, bits) pair, frames outer, bits inner."""
    if not frame_counts or not bit_widths:
        raise ValueError("frame_counts and bit_widths must be non-empty")
    reports = []
    for frames in frame_counts:
        if frames < 0:
            raise ValueError("frame counts must be non-negative")
        seq_len = frames * model.tokens_per_frame
        for bits in bit_widths:
            mem = total_memory(model, seq_len, bits)
            reports.append(
                CostReport(
                    frames=frames,
                    kv_bits=bits,
                    ops_total=decode_ops(model, seq_len, n_out),
                    decode_time_ms=decode_time_ms(mem, hw),
                    total_memory_bytes=mem,
                    kv_bytes=kv_bytes(model, seq_len, bits),
                )
            )
    return reports


def reference_layout(model: ModelSpec, hw: HardwareSpec, n_out: int = 1000) -> list[CostReport]:
    """The nine-row layout of the reference cost table.

    A lone 8-frame FP16 baseline row followed by FP16 and INT2 rows for each
    doubled frame count 16..128.
    """
    rows = analyze(model, hw, [8], [16], n_out)
    rows += analyze(model, hw, [16, 32, 64, 128], [16, 2], n_out)
    return rows


# --- profile documents -------------------------------------------------------


def _load_profile(source, cls):
    if isinstance(source, (str, Path)):
        text = Path(source).read_text()
    else:
        text = source.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileError(f"profile is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProfileError("profile must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ProfileError(f"unknown profile key(s): {', '.join(unknown)}")
    required = {f.name for f in fields(cls) if f.default is MISSING}
    missing = sorted(required - set(doc))
    if missing:
        raise ProfileError(f"missing profile key(s): {', '.join(missing)}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ProfileError(f"invalid profile value: {exc}") from exc


def load_model_spec(source) -> ModelSpec:
    """Parse a ModelSpec JSON document (path or open file); keys are strict."""
    return _load_profile(source, ModelSpec)


def load_hardware_spec(source) -> HardwareSpec:
    """Parse a HardwareSpec JSON document (path or open file); keys are strict."""
    return _load_profile(source, HardwareSpec)


def bundled_profile_path(name: str) -> Path:
    """Path of a profile shipped with the package (``vicuna-7b``, ``a100``)."""
    candidate = resources.files("videoctx").joinpath("profiles", f"{name}.json")
    with resources.as_file(candidate) as path:
        if not path.exists():
            raise FileNotFoundError(f"no bundled profile named {name!r}")
        return Path(path)


# --- report rendering --------------------------------------------------------

CSV_COLUMNS = ("frames", "kv_bits", "ops_total", "decode_time_ms", "total_memory_bytes", "kv_bytes")


def render_csv(reports: list[CostReport]) -> str:
    """CostReport fields verbatim, one row per configuration."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow(
            [r.frames, r.kv_bits, f"{r.ops_total:.6g}", f"{r.decode_time_ms:.4f}",
             f"{r.total_memory_bytes:.6g}", f"{r.kv_bytes:.6g}"]
        )
    return buf.getvalue()


def render_table(reports: list[CostReport]) -> str:
    """Aligned human-readable table in T-ops / ms / GB units."""
    header = f"{'frames':>6}  {'kv_bits':>7}  {'ops_T':>8}  {'decode_ms':>9}  {'total_GB':>8}  {'kv_GB':>6}"
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(
            f"{r.frames:>6}  {r.kv_bits:>7}  {r.ops_total / 1e12:>8.1f}  "
            f"{r.decode_time_ms:>9.1f}  {r.total_memory_bytes / _GB:>8.1f}  "
            f"{r.kv_bytes / _GB:>6.1f}"
        )
    return "\n".join(lines) + "\n"
