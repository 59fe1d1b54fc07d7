"""Command line entry: smoothdim-plot <kind> <input.csv> <output.(png|svg)>."""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, PlotRequest, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smoothdim-plot",
        description="Render simulation result CSVs as publication-style figures.",
    )
    parser.add_argument("kind", choices=KINDS, help="figure type")
    parser.add_argument("input", help="simulation results CSV")
    parser.add_argument("output", help="image path (.png or .svg)")
    parser.add_argument("--scenario", default=None, help="restrict to one scenario id")
    parser.add_argument("--n", type=int, default=None, help="sample size annotation for panel titles")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    request = PlotRequest(
        kind=args.kind,
        input_csv=args.input,
        output=args.output,
        scenario=args.scenario,
        n=args.n,
    )
    try:
        out = render(request)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
