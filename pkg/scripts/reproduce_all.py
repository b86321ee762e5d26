"""Regenerate the data for every figure panel.

    python scripts/reproduce_all.py --out out/figures [--order N] [--only fig2a fig2b]

``--order`` caps each sweep, which keeps a smoke run to a few minutes.
"""
import argparse
import json
import sys

from memkernel.workbench import FIGURES, reproduce


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="out/figures")
    p.add_argument("--order", type=int)
    p.add_argument("--only", nargs="*", choices=sorted(FIGURES))
    args = p.parse_args(argv)
    for fig in args.only or sorted(FIGURES):
        res = reproduce(fig, args.out, args.order)
        res.pop("outputs", None)
        print(json.dumps(res, sort_keys=True), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
