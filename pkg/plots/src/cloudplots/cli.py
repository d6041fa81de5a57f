"""Command-line surface: `plots heatmap` and `plots loglog`.

Exit codes follow the harness convention: 0 success, 2 I/O problems,
64 usage and validation problems.
"""

from __future__ import annotations

import argparse
import sys

from .render import DataError, HeatmapSpec, render_heatmap, render_loglog

EXIT_OK = 0
EXIT_IO = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def cmd_heatmap(args) -> int:
    spec = HeatmapSpec(csv_path=args.csv, out_path=args.out, d=args.d,
                       k=args.k, oracle_target_mse=args.target,
                       blue_intercept=args.blue_intercept,
                       colormap=args.colormap)
    render_heatmap(spec).close()
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_loglog(args) -> int:
    render_loglog(args.csv, args.x, args.y, args.out).close()
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="plots",
                     description="Render figures from the estimation "
                                 "harness CSV files.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("heatmap", help="phase-transition heatmap with overlays")
    p.add_argument("--csv", required=True, help="sweep grid CSV")
    p.add_argument("--out", required=True, help="output image (.png or .svg)")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--target", type=float, default=0.95,
                   help="oracle relative MSE level for the red overlay")
    p.add_argument("--blue-intercept", type=float, default=None,
                   help="draw the slope-1/4 blue overlay through this intercept")
    p.add_argument("--colormap", default="gray_r",
                   help="matplotlib colormap (default monochrome, dark = high)")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("loglog", help="log-log curve of one column vs another")
    p.add_argument("--csv", required=True)
    p.add_argument("--x", required=True, help="x column name")
    p.add_argument("--y", required=True, help="y column name")
    p.add_argument("--out", required=True, help="output image (.png or .svg)")
    p.set_defaults(func=cmd_loglog)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"plots: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"plots: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
