"""Command line front end: one subcommand per figure kind."""

from __future__ import annotations

import argparse
import sys

import matplotlib

matplotlib.use("Agg")

from .figures import plot_grid, plot_tracking, plot_training  # noqa: E402


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="plotkit",
        description="render training-run artifacts to figure files")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("training", help="metric curve with a 1-std band")
    t.add_argument("logs", nargs="+", help="training CSV files, one per run")
    t.add_argument("--metric", default="mean_esl_positive_fraction")
    t.add_argument("--out", required=True, help="output image path")

    g = sub.add_parser("grid", help="contour plot of a certificate grid")
    g.add_argument("grid", help="grid CSV file")
    g.add_argument("--levels", type=int, default=12)
    g.add_argument("--out", required=True)

    k = sub.add_parser("tracking", help="reference overlay for a trajectory")
    k.add_argument("trajectory", help="trajectory CSV file")
    k.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "training":
            plot_training(args.logs, args.metric, out=args.out)
        elif args.command == "grid":
            plot_grid(args.grid, out=args.out, levels=args.levels)
        else:
            plot_tracking(args.trajectory, out=args.out)
    except (OSError, ValueError) as exc:
        print(f"plotkit: {exc}", file=sys.stderr)
        return 2
    print(args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
