"""Command line entry point: wasr-plots render --csv <path> --kind <k> --out <path>"""

import argparse
import sys

from .render import FIGURE_KINDS, FigureSpec, render


def main(argv=None):
    parser = argparse.ArgumentParser(prog="wasr-plots", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_render = sub.add_parser("render", help="render one experiment CSV to a PNG")
    p_render.add_argument("--csv", required=True, help="input CSV (batch-CLI schema)")
    p_render.add_argument("--kind", required=True, choices=sorted(FIGURE_KINDS))
    p_render.add_argument("--out", required=True, help="output PNG path")
    p_render.add_argument("--xlabel")
    p_render.add_argument("--ylabel")
    args = parser.parse_args(argv)
    out = render(FigureSpec(args.csv, args.kind, args.out, args.xlabel, args.ylabel))
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
