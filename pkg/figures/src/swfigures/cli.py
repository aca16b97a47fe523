"""figures <kind> --in <dir> --out <file> [--field <name>]

Renders one image from a completed harness directory.  Kinds:
convergence-dx, convergence-dt, coupling-panel, field-map.
"""

from __future__ import annotations

import argparse
import sys

from .io import FigureInputError
from .render import KINDS, PlotSpec, render

__all__ = ["main", "cli_main"]


def build_parser():
    parser = argparse.ArgumentParser(prog="figures", description=__doc__)
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--in", dest="indir", required=True, help="harness output directory")
    parser.add_argument("--out", dest="outpath", required=True, help="image file to write")
    parser.add_argument("--field", default=None, help="restrict to one field")
    return parser


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    try:
        counts = render(PlotSpec(indir=args.indir, kind=args.kind,
                                 outpath=args.outpath, field=args.field))
    except FigureInputError as exc:
        print(f"figures: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.outpath} ({counts['panels']} panel(s), {counts['points']} point(s))")
    return 0


def main():
    sys.exit(cli_main())
