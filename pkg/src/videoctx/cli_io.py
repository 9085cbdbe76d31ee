"""Command-line entry point: rearrange, analyze, quantize, demo-decode.

Data goes to stdout (JSON lines, CSV, or an aligned table); diagnostics and
error messages go to stderr. Exit status:

    0  success
    2  command-line usage error (argparse)
    3  I/O failure (missing file, unreadable path, ...)
    4  file or profile format violation
    5  constraint violation (divisibility, window overflow, bad values)

All randomness flows from the ``--seed`` flag (default 0).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import tensorfile
from .frame_rearrange import TokenGrid, interleave_tokens, plan_subsequences
from .kv_quant import (
    SUPPORTED_BITS,
    QuantScheme,
    dequantize,
    quantize,
    quantize_with_calibration,
    roundtrip_error,
)
from .roofline_analyzer import (
    ProfileError,
    analyze,
    bundled_profile_path,
    load_hardware_spec,
    load_model_spec,
    reference_layout,
    render_csv,
    render_table,
)
from .rope_kernel import RopeConfig
from .toy_decoder import DecoderSpec, decode_steps, init_decoder

EXIT_OK = 0
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_CONSTRAINT = 5

DEFAULT_SEED = 0

_MODE_FLAGS = {"none": "none", "linear": "linear_interpolation", "ntk": "ntk_aware"}


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _load_f32(path) -> np.ndarray:
    data = tensorfile.load(path)
    if not isinstance(data, np.ndarray):
        raise tensorfile.TensorFormatError(f"{path}: expected an f32 tensor, found packed codes")
    return data


def cmd_rearrange(args) -> int:
    """Restore chronological frame order from stacked encoder outputs.

    The input grid holds the m encoder passes stacked in subsequence order
    (pass 1's capacity frames first, then pass 2's, ...); the output grid has
    the same blocks at their absolute chronological positions.
    """
    data = _load_f32(args.input)
    if data.ndim != 3:
        raise tensorfile.TensorFormatError(
            f"{args.input}: token grid must be rank 3, got rank {data.ndim}"
        )
    plan = plan_subsequences(data.shape[0], args.capacity)
    groups = [
        TokenGrid.from_array(data[i * args.capacity : (i + 1) * args.capacity])
        for i in range(plan.multiplier)
    ]
    out = interleave_tokens(groups, plan)
    tensorfile.write_f32(args.output, out.data)
    _emit(
        {
            "total_frames": plan.total_frames,
            "encoder_capacity": plan.encoder_capacity,
            "multiplier": plan.multiplier,
            "subsequences": [list(s) for s in plan.subsequences],
            "output": str(args.output),
        }
    )
    return EXIT_OK


def cmd_analyze(args) -> int:
    model = load_model_spec(args.model if args.model else bundled_profile_path("vicuna-7b"))
    hw = load_hardware_spec(args.hardware if args.hardware else bundled_profile_path("a100"))
    if args.frames is None and args.bits is None:
        reports = reference_layout(model, hw, n_out=args.n_out)
    else:
        frames = args.frames if args.frames is not None else [8, 16, 32, 64, 128]
        bits = args.bits if args.bits is not None else [16, 2]
        reports = analyze(model, hw, frames, bits, n_out=args.n_out)
    if args.format == "csv":
        sys.stdout.write(render_csv(reports))
    else:
        sys.stdout.write(render_table(reports))
    return EXIT_OK


def cmd_quantize(args) -> int:
    data = _load_f32(args.input)
    scheme = QuantScheme(bits=args.bits, axis=args.axis, group_size=args.group_size)
    calibration = None
    if args.calibration:
        calibration = [_load_f32(p) for p in args.calibration]
    layer = quantize_with_calibration(data, scheme, calibration)
    tensorfile.write_quantized(args.output, layer)
    stats = roundtrip_error(data, layer)
    stats["bits"] = args.bits
    stats["axis"] = args.axis
    stats["groups"] = int(layer.params.scale.size)
    # (scale, zero point) pairs as stored on disk; excluded from kv-size figures
    stats["metadata_bytes"] = int(layer.params.scale.size) * 8
    if args.self_verify:
        again = quantize(dequantize(layer), layer.params, layer.scheme)
        reread = tensorfile.load(args.output)
        stable = bool(np.array_equal(again.codes, layer.codes))
        readable = bool(np.array_equal(reread.codes, layer.codes))
        stats["self_verify"] = "ok" if (stable and readable) else "mismatch"
        if not (stable and readable):
            _emit(stats)
            print("error: self-verify found unstable codes", file=sys.stderr)
            return EXIT_CONSTRAINT
    _emit(stats)
    return EXIT_OK


def cmd_demo_decode(args) -> int:
    grid_data = _load_f32(args.grid)
    if grid_data.ndim != 3:
        raise tensorfile.TensorFormatError(
            f"{args.grid}: token grid must be rank 3, got rank {grid_data.ndim}"
        )
    grid = TokenGrid.from_array(grid_data)
    spec = DecoderSpec(
        layers=args.layers, hidden=args.hidden, heads=args.heads, vocab=args.vocab, seed=args.seed
    )
    if grid.dim != spec.hidden:
        raise ValueError(
            f"token grid dim {grid.dim} does not match decoder hidden size {spec.hidden}"
        )
    target = args.target_window if args.target_window else args.pretrained_window
    rope = RopeConfig(
        head_dim=spec.head_dim,
        pretrained_window=args.pretrained_window,
        target_window=target,
        base=args.base,
        mode=_MODE_FLAGS[args.mode],
    )
    scheme = None if args.cache == "full" else QuantScheme(bits=int(args.cache[3:]))
    decoder = init_decoder(spec)
    tokens = []
    for rec in decode_steps(
        decoder,
        args.prompt,
        args.n_out,
        rope,
        cache_mode="full_precision" if scheme is None else "quantized",
        scheme=scheme,
        visual_prefix=grid.flatten_tokens(),
    ):
        tokens.append(rec["token"])
        _emit(rec)
    _emit({"tokens": tokens, "mode": rope.mode, "cache": args.cache, "seed": args.seed})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="videoctx",
        description=(
            "Training-free long-video tooling: strided frame rearrangement, "
            "rotary window interpolation, KV-cache quantization, and a "
            "roofline decode-cost analyzer."
        ),
        epilog="Exit codes: 0 ok, 2 usage, 3 I/O failure, 4 format violation, 5 constraint violation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "rearrange",
        help="interleave stacked encoder outputs back into chronological order",
    )
    p.add_argument("input", help="rank-3 f32 tensor file, encoder passes stacked in order")
    p.add_argument("--capacity", type=int, required=True, help="frames per encoder pass (N)")
    p.add_argument("--output", required=True, help="destination tensor file")
    p.set_defaults(func=cmd_rearrange)

    p = sub.add_parser("analyze", help="roofline decode-cost table for frame/bit configurations")
    p.add_argument("--model", help="model profile JSON (default: bundled vicuna-7b)")
    p.add_argument("--hardware", help="hardware profile JSON (default: bundled a100)")
    p.add_argument(
        "--frames",
        type=int,
        nargs="+",
        help="frame counts; with --bits, emits the full cross product "
        "(default: the nine-row reference layout)",
    )
    p.add_argument("--bits", type=int, nargs="+", help="KV bit widths (default layout: 16 and 2)")
    p.add_argument("--n-out", type=int, default=1000, help="generated tokens for the OPs column")
    p.add_argument("--format", choices=("csv", "table"), default="table")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("quantize", help="post-training quantization of a tensor file")
    p.add_argument("input", help="f32 tensor file (rank >= 2)")
    p.add_argument("--bits", type=int, choices=SUPPORTED_BITS, required=True)
    p.add_argument("--axis", choices=("per_channel", "per_token"), default="per_token")
    p.add_argument("--group-size", type=int, default=None, help="group extent (default: whole axis)")
    p.add_argument(
        "--calibration",
        action="append",
        help="f32 tensor file providing calibration statistics; repeatable "
        "(default: calibrate on the input itself)",
    )
    p.add_argument("--output", required=True, help="destination packed-codes tensor file")
    p.add_argument(
        "--self-verify",
        action="store_true",
        help="re-quantize the reconstruction and re-read the output file, "
        "checking both reproduce identical codes",
    )
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser(
        "demo-decode",
        help="greedy-decode with a toy decoder over a token-grid prefix",
    )
    p.add_argument("grid", help="rank-3 f32 token grid; dim must equal --hidden")
    p.add_argument("--prompt", type=int, nargs="+", required=True, help="prompt token ids")
    p.add_argument("--n-out", type=int, default=8, help="tokens to generate")
    p.add_argument("--mode", choices=tuple(_MODE_FLAGS), default="ntk")
    p.add_argument("--base", type=float, default=10000.0)
    p.add_argument("--pretrained-window", type=int, default=256)
    p.add_argument("--target-window", type=int, default=None, help="default: pretrained window")
    p.add_argument(
        "--cache",
        choices=("full", "int2", "int4", "int8", "int16"),
        default="full",
        help="KV cache storage mode",
    )
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--vocab", type=int, default=128)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="weight-init seed")
    p.set_defaults(func=cmd_demo_decode)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (tensorfile.TensorFormatError, ProfileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
