#!/usr/bin/env python3
"""Run the assumption check and all four verification experiments on the
pilot configurations, writing CSV/JSON results under ./out (or --out DIR).

Everything is seeded through the configs; re-running reproduces the output
files byte for byte.
"""

import argparse
import pathlib
import sys

from shelab import cli

HERE = pathlib.Path(__file__).resolve().parent
CONFIGS = HERE / "configs"

STAGES = [
    ("check-assumptions", "pilot_moments.json"),
    ("verify-moments", "pilot_moments.json"),
    ("verify-tails", "pilot_tails.json"),
    ("convergence", "pilot_convergence.json"),
    ("uniqueness", "pilot_convergence.json"),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out")
    ap.add_argument("--threads", type=int, default=2)
    args = ap.parse_args()

    for command, config in STAGES:
        print(f"== {command} ({config}) ==")
        rc = cli.main(
            ["--out", args.out, "--threads", str(args.threads), command, str(CONFIGS / config)]
        )
        if rc != 0:
            print(f"{command} exited with {rc}", file=sys.stderr)
            return rc
    print(f"all pilot experiments completed; results in {args.out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
