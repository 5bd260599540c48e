"""Command line front end: one subcommand per figure kind.

Exit codes: 0 on success, 2 for usage or input-contract problems
(missing file, missing column, empty table, bad style value).  A
one-line summary with the output path and curve count goes to stdout.
"""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, PlotDataError, PlotSpec, render

_HELP = {
    "h_vs_D": "threshold indicator curves h(D), one per (d, alpha)",
    "H_vs_u": "consistency curves H(u), one per noise level",
    "bifurcation": "order parameter against noise, per branch",
    "entropy_decay": "free-energy gap history on a log scale",
    "gap_vs_D": "spectral rate constants against noise",
}


def _figsize(text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(
            f"expected WIDTH,HEIGHT, got {text!r}")
    return (float(parts[0]), float(parts[1]))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flockplots",
        description="Render figures from flocklab CSV output.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind.replace("_", "-"), help=_HELP[kind])
        p.set_defaults(kind=kind)
        p.add_argument("inputs", nargs="+", metavar="CSV",
                       help="input table(s); concatenated when several")
        p.add_argument("-o", "--output", required=True,
                       help="image path (format from the suffix)")
        p.add_argument("--title")
        p.add_argument("--xlabel")
        p.add_argument("--ylabel")
        p.add_argument("--dpi", type=int)
        p.add_argument("--figsize", type=_figsize, metavar="W,H")
        p.add_argument("--no-legend", dest="legend", action="store_false",
                       default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    style = {}
    for key in ("title", "xlabel", "ylabel", "dpi", "figsize", "legend"):
        value = getattr(args, key)
        if value is not None:
            style[key] = value
    try:
        spec = PlotSpec(kind=args.kind, inputs=tuple(args.inputs),
                        output=args.output, style=style)
        summary = render(spec)
    except (PlotDataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{summary.output}: {summary.n_curves} curve"
          f"{'s' if summary.n_curves != 1 else ''}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
