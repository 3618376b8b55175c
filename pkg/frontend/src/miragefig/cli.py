"""Command-line front door: ``plot <kind> <csv...> --out <png>``.

Exit codes follow the producer's convention: 0 on success, 2 for schema
or argument problems.
"""

from __future__ import annotations

import argparse
import sys

from .plots import KINDS, PlotSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render PNG figures from simulation CSV outputs.",
    )
    sub = parser.add_subparsers(dest="kind", metavar="|".join(KINDS))
    sub.required = True

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("csv", nargs="+", help="input CSV file(s)")
    common.add_argument("--out", required=True, help="output PNG path")
    common.add_argument("--title", default=None)
    common.add_argument("--xlabel", default=None)
    common.add_argument("--ylabel", default=None)
    common.add_argument("--dpi", type=int, default=150)

    spectra = sub.add_parser("spectra", parents=[common], help="matched-filter spectra panels")
    spectra.add_argument("--log-y", action="store_true", help="logarithmic power axis")

    curves = sub.add_parser("curves", parents=[common], help="sweep summary curves")
    curves.add_argument(
        "--metric", action="append", default=[],
        help="metric to draw (repeatable; default: every metric in the file)",
    )
    curves.add_argument(
        "--ref", action="append", type=float, default=[],
        help="horizontal reference line (repeatable)",
    )
    curves.add_argument("--linear-y", action="store_true", help="disable the default log y axis")

    heatmap = sub.add_parser("heatmap", parents=[common], help="rate heatmap over candidate positions")
    heatmap.add_argument("--bs", nargs=2, type=float, default=(0.0, 0.0), metavar=("X", "Y"))
    heatmap.add_argument("--ue", nargs=2, type=float, default=None, metavar=("X", "Y"))

    return parser


def _spec_from_args(args: argparse.Namespace) -> PlotSpec:
    log_y = None
    if args.kind == "spectra" and args.log_y:
        log_y = True
    if args.kind == "curves" and args.linear_y:
        log_y = False
    return PlotSpec(
        kind=args.kind,
        csv_paths=tuple(args.csv),
        out_path=args.out,
        title=args.title,
        x_label=args.xlabel,
        y_label=args.ylabel,
        log_y=log_y,
        reference_lines=tuple(getattr(args, "ref", ())),
        metrics=tuple(getattr(args, "metric", ())),
        bs_xy=tuple(getattr(args, "bs", (0.0, 0.0))),
        ue_xy=tuple(args.ue) if getattr(args, "ue", None) is not None else None,
        dpi=args.dpi,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        render(_spec_from_args(args))
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
