"""``simulate`` command line driver."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DeadlockError, ModelError, ValidationError
from .report import dram_table, format_table, manifest, throughput_table, write_csv
from .runtime import MODES, DataflowGraph, Runtime
from .soc import SocConfig, build_soc

CONFIG_DIR = Path(__file__).parent / "configs"


def resolve_config(name: str) -> Path:
    """A path as given, or the name of a shipped config (with or without .json)."""
    p = Path(name)
    if p.exists():
        return p
    for cand in (CONFIG_DIR / name, CONFIG_DIR / f"{name}.json"):
        if cand.exists():
            return cand
    raise ConfigError(f"{name}: no such file (and no shipped config of that name)")


def run_experiment(soc_file, dataflow_file, modes, frames, seed=0):
    """Run ``modes`` on fresh SoCs built from the same floorplan."""
    soc_cfg = SocConfig.from_file(soc_file)
    graph = DataflowGraph.from_file(dataflow_file)
    reports = []
    for mode in modes:
        soc = build_soc(soc_cfg)
        rt = Runtime(soc)
        plan = rt.validate(graph)
        reports.append(rt.run(plan, frames, mode, seed=seed))
    return reports


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="simulate",
                                 description="Run a dataflow on a simulated accelerator SoC.")
    ap.add_argument("--soc", required=False, help="SoC floorplan JSON (path or shipped name)")
    ap.add_argument("--dataflow", required=False, help="dataflow JSON (path or shipped name)")
    ap.add_argument("--mode", choices=MODES, default="p2p")
    ap.add_argument("--compare", action="store_true", help="run serial, pipe and p2p")
    ap.add_argument("--frames", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="write the metrics CSV here (default: stdout)")
    ap.add_argument("--manifest", help="write a JSON run manifest here")
    ap.add_argument("--list", action="store_true", help="list shipped configs and exit")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.list:
        for p in sorted(CONFIG_DIR.glob("*.json")):
            print(p.stem)
        return 0
    if not args.soc or not args.dataflow:
        print("simulate: --soc and --dataflow are required", file=sys.stderr)
        return 2
    modes = list(MODES) if args.compare else [args.mode]
    try:
        soc_file = resolve_config(args.soc)
        df_file = resolve_config(args.dataflow)
        reports = run_experiment(soc_file, df_file, modes, args.frames, args.seed)
    except ValidationError as e:
        print(f"validation failed:\n  " + "\n  ".join(e.issues), file=sys.stderr)
        return 3
    except DeadlockError as e:
        print(f"deadlock: {e}", file=sys.stderr)
        for line in e.waiting:
            print(f"  {line}", file=sys.stderr)
        return 4
    except (ConfigError, ModelError, json.JSONDecodeError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2

    text = write_csv(reports)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.manifest:
        Path(args.manifest).write_text(manifest(reports, soc_file, df_file))
    if args.compare:
        out = sys.stderr if not args.out else sys.stdout
        print("\nDRAM accesses relative to p2p", file=out)
        print(format_table(dram_table(reports)), file=out)
        print("\nThroughput", file=out)
        print(format_table(throughput_table(reports)), file=out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
