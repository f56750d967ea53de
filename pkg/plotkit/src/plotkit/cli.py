"""Entry points: plot-slice <in.csv> <out.png>, plot-losses <in.csv> <out.png>."""

import argparse
import sys

from .errors import PlotkitError
from .losses import plot_losses
from .slices import plot_slice


def main_slice(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot-slice",
        description="Render a harness slice CSV as estimated-vs-exact u.")
    parser.add_argument("input", help="slice CSV produced by the harness")
    parser.add_argument("output", help="output image path")
    args = parser.parse_args(argv)
    try:
        _, deviation = plot_slice(args.input, args.output)
    except (PlotkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if deviation is not None:
        print(f"max |u_hat - u_exact| = {deviation:.6g}")
    print(f"wrote {args.output}")
    return 0


def main_losses(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot-losses",
        description="Render a harness loss CSV as per-step loss curves.")
    parser.add_argument("input", help="loss CSV produced by the harness")
    parser.add_argument("output", help="output image path")
    args = parser.parse_args(argv)
    try:
        plot_losses(args.input, args.output)
    except (PlotkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main_slice())
