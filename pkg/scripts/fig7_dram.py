"""Relative DRAM accesses of DMA-only vs p2p pipelines (desk-scale Fig. 7).

Usage: python scripts/fig7_dram.py [--frames 64] [--out dram.csv]
"""
import argparse
import csv
import sys

from espsim.cli import CONFIG_DIR, run_experiment
from espsim.report import format_table

PIPELINES = [("nv_classifier", "soc_a"), ("denoiser_classifier", "soc_a"),
             ("multitile_classifier", "soc_b"), ("nightvision_split", "soc_a")]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    args = ap.parse_args()
    rows = []
    for df, soc in PIPELINES:
        reps = {r.mode: r for r in run_experiment(CONFIG_DIR / f"{soc}.json",
                                                  CONFIG_DIR / f"{df}.json",
                                                  ["pipe", "p2p"], args.frames, args.seed)}
        rows.append({"pipeline": df, "frames": args.frames,
                     "dma_words": reps["pipe"].dram_words, "p2p_words": reps["p2p"].dram_words,
                     "dma_over_p2p": reps["pipe"].dram_words / reps["p2p"].dram_words})
    print(format_table(rows))
    if args.out:
        with open(args.out, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
