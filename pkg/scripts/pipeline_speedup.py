"""Throughput of serial, pipe and p2p execution for identity chains of
equal-latency stages, next to the fill/drain ideal S*F/(F+S-1).

Usage: python scripts/pipeline_speedup.py [--frames 64] [--cycles 20000 5000]
"""
import argparse
import sys

from espsim import build_soc, run_dataflow
from espsim.report import format_table
from espsim.workloads import chain


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=64)
    ap.add_argument("--stages", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--cycles", type=int, nargs="+", default=[20_000, 5_000])
    ap.add_argument("--words", type=int, default=1024)
    args = ap.parse_args()
    rows = []
    for cycles in args.cycles:
        for s in args.stages:
            socd, g = chain(s, cycles, words=args.words)
            fps = {}
            for mode, graph in (("serial", g), ("pipe", g), ("p2p", g.with_modes("P2P"))):
                fps[mode] = run_dataflow(build_soc(socd), graph, args.frames,
                                         mode).frames_per_second
            f = args.frames
            rows.append({"stage_cycles": cycles, "stages": s, "serial_fps": fps["serial"],
                         "pipe_speedup": fps["pipe"] / fps["serial"],
                         "p2p_speedup": fps["p2p"] / fps["serial"],
                         "ideal": s * f / (f + s - 1)})
    print(format_table(rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
