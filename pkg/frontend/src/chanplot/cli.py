"""Command line wrapper: results CSV in, NMSE figure out.

Missing input files exit with 2, bad file contents with 1.
"""

from __future__ import annotations

import argparse
import sys

from .figures import FigureSpec, plot_nmse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chanplot",
        description="Plot mean NMSE vs transmit power from a sweep results CSV.",
    )
    parser.add_argument("--csv", required=True, help="sweep results CSV path")
    parser.add_argument("--speed", type=float,
                        help="speed_kmh filter (needed when the CSV mixes speeds)")
    parser.add_argument("--methods",
                        help="comma-separated subset of methods to plot")
    parser.add_argument("--out", required=True, help="output image path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    methods = None
    if args.methods:
        names = [tok.strip() for tok in args.methods.split(",") if tok.strip()]
        fmts = ("o-", "s--", "^-.", "d:", "v-", "*--", "p-.", "x:")
        methods = {m: (m, fmts[i % len(fmts)]) for i, m in enumerate(names)}
    spec = FigureSpec(csv_path=args.csv, out_path=args.out, speed=args.speed,
                      methods=methods)
    try:
        curves = plot_nmse(spec)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    n_points = sum(len(c.powers) for c in curves.values())
    print(f"wrote {args.out}: {len(curves)} methods, {n_points} points")
    return 0


if __name__ == "__main__":
    sys.exit(main())
