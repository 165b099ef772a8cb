"""Regenerate the dataset of every figure into one output directory.

    python scripts/reproduce_figures.py --out-dir figures [--seed 0] [--large]

Each figure gets its own subdirectory with CSV tables and a manifest.
"""

import argparse
import sys
import time

from ofdm_dlc import figures
from ofdm_dlc.cli import run


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="figures")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--large", action="store_true", help="include the K = 1024 configuration")
    ap.add_argument("--only", nargs="*", default=None, help="subset of figure ids")
    args = ap.parse_args(argv)
    names = args.only or [n for n in figures.FIGURES
                          if args.large or n not in figures.LARGE_FIGURES]
    status = 0
    for name in names:
        t0 = time.perf_counter()
        cmd = ["figure", name, "--seed", str(args.seed), "--out-dir", f"{args.out_dir}/{name}"]
        if args.large:
            cmd.append("--large")
        code = run(cmd)
        print(f"{name}: exit {code}, {time.perf_counter() - t0:.0f} s", file=sys.stderr)
        status = status or code
    return status


if __name__ == "__main__":
    sys.exit(main())
