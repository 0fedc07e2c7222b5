"""Regenerate the effort and welfare figures (CSV + SVG) from the bundled preset.

    python scripts/reproduce_figures.py [out_dir] [--threads N]
"""

import argparse
import logging

from halluc_market.figures import write_figures
from halluc_market.scenario import load_preset
from halluc_market.sweep import read_crossings, read_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", nargs="?", default="figures")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    sc = load_preset()
    for path in write_figures(sc, args.out, args.threads):
        print(path)

    rows = read_csv(f"{args.out}/fig1a_effort_by_delta.csv")
    for delta in sorted({r["delta"] for r in rows}):
        top = max(r["effort"] for r in rows if r["delta"] == delta and r["active"])
        print(f"delta={delta:.2f}: max e* = {top:.4f}")
    for x in read_crossings(f"{args.out}/fig3_crossing.csv"):
        print(f"model switch at mu = {x:.6f}")


if __name__ == "__main__":
    main()
