#!/usr/bin/env python3
"""Print the decode-cost table for the bundled Vicuna-7B / A100 profiles.

The default nine-row layout pairs each doubled frame count with FP16 and INT2
KV caches on top of the 8-frame FP16 baseline. Use --frames/--bits for an
arbitrary cross product, --csv for machine-readable output.
"""

import argparse
import sys

from videoctx.roofline_analyzer import (
    analyze,
    bundled_profile_path,
    load_hardware_spec,
    load_model_spec,
    reference_layout,
    render_csv,
    render_table,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, nargs="+", default=None)
    parser.add_argument("--bits", type=int, nargs="+", default=None)
    parser.add_argument("--n-out", type=int, default=1000)
    parser.add_argument("--csv", action="store_true")
    args = parser.parse_args()

    model = load_model_spec(bundled_profile_path("vicuna-7b"))
    hw = load_hardware_spec(bundled_profile_path("a100"))
    if args.frames is None and args.bits is None:
        reports = reference_layout(model, hw, n_out=args.n_out)
    else:
        reports = analyze(
            model,
            hw,
            args.frames or [8, 16, 32, 64, 128],
            args.bits or [16, 2],
            n_out=args.n_out,
        )
    sys.stdout.write(render_csv(reports) if args.csv else render_table(reports))
    return 0


if __name__ == "__main__":
    sys.exit(main())
