"""Command-line entry: simlog-plots LOG.csv [LOG.csv ...] --kind K --out IMG."""

from __future__ import annotations

import argparse
import sys

from .render import FigureKind, PlotSpec, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="simlog-plots", description="render simulation CSV logs into figures"
    )
    parser.add_argument("inputs", nargs="+", help="simulation CSV logs")
    parser.add_argument(
        "--kind",
        required=True,
        choices=[kind.value for kind in FigureKind],
        help="figure layout",
    )
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument(
        "--overlay",
        help="extra CSV drawn as a dashed reference (rho_trace only)",
    )
    args = parser.parse_args(argv)
    try:
        out = render(
            PlotSpec(inputs=args.inputs, kind=args.kind, out=args.out, overlay=args.overlay)
        )
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
