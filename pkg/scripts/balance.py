"""Pipeline balancing: stage A is k times slower than stage B; replicate A
and compare the end-to-end rate with B running alone.

Usage: python scripts/balance.py [--slowdown 2] [--frames 64]
"""
import argparse
import sys

from espsim import build_soc, run_dataflow
from espsim.report import format_table
from espsim.workloads import chain


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slowdown", type=int, default=2)
    ap.add_argument("--cycles", type=int, default=20_000, help="stage B compute cycles")
    ap.add_argument("--frames", type=int, default=64)
    args = ap.parse_args()
    c, k = args.cycles, args.slowdown
    socd, g = chain(1, c)
    b_rate = run_dataflow(build_soc(socd), g, args.frames, "pipe").frames_per_second
    rows = []
    for inst in range(1, k + 2):
        for mode, edge in (("pipe", "DMA"), ("p2p", "P2P")):
            socd, g = chain(2, [k * c, c], mode=edge, instances=[inst, 1], rows=3, cols=3)
            r = run_dataflow(build_soc(socd), g, args.frames, mode)
            rows.append({"a_instances": inst, "mode": mode, "fps": r.frames_per_second,
                         "fraction_of_b": r.frames_per_second / b_rate})
    print(f"B alone: {b_rate:.1f} frames/s")
    print(format_table(rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
