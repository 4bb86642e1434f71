"""Run metrics and their CSV / manifest serialization.

The CSV is in long form, one metric per row (``run,section,key,value``), so
per-link and per-node maps of any size share a single file and several runs
can be concatenated. :func:`parse_csv` inverts :func:`write_csv` exactly.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields

SUMMARY_FIELDS = ("mode", "dataflow", "frames", "seed", "total_cycles", "clock_mhz",
                  "frames_per_second", "dram_read_words", "dram_write_words", "flits_injected",
                  "flits_delivered", "flits_in_flight", "max_queue_occupancy",
                  "config_fingerprint", "output_digest", "trace_digest")


@dataclass
class RunReport:
    mode: str
    dataflow: str
    frames: int
    seed: int
    total_cycles: int
    clock_mhz: float
    dram_read_words: int
    dram_write_words: int
    config_fingerprint: str
    output_digest: str = ""
    trace_digest: str = ""
    flits_injected: int = 0
    flits_delivered: int = 0
    flits_in_flight: int = 0
    max_queue_occupancy: int = 0
    per_link_flits: dict = field(default_factory=dict)
    per_node_busy_cycles: dict = field(default_factory=dict)
    frames_per_second: float = field(default=0.0)

    def __post_init__(self):
        self.frames_per_second = fps(self.frames, self.clock_mhz, self.total_cycles)

    @property
    def dram_words(self) -> int:
        return self.dram_read_words + self.dram_write_words

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in SUMMARY_FIELDS}


def fps(frames: int, clock_mhz: float, cycles: int) -> float:
    return frames * clock_mhz * 1e6 / cycles if cycles > 0 else 0.0


_TYPES = {f.name: f.type for f in fields(RunReport)}


def _coerce(key, text):
    t = _TYPES[key]
    if t == "int":
        return int(text)
    if t == "float":
        return float(text)
    return text


def write_csv(reports, stream=None) -> str:
    """Write reports as ``run,section,key,value`` rows; returns the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "section", "key", "value"])
    for i, r in enumerate(reports):
        for k, v in r.summary().items():
            w.writerow([i, "summary", k, repr(v) if isinstance(v, float) else v])
        for k, v in sorted(r.per_link_flits.items()):
            w.writerow([i, "link", k, v])
        for k, v in sorted(r.per_node_busy_cycles.items()):
            w.writerow([i, "busy", k, v])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def parse_csv(text: str) -> list[RunReport]:
    runs: dict[int, dict] = {}
    for row in csv.DictReader(io.StringIO(text)):
        d = runs.setdefault(int(row["run"]), {"per_link_flits": {}, "per_node_busy_cycles": {}})
        sec, key, val = row["section"], row["key"], row["value"]
        if sec == "summary":
            d[key] = _coerce(key, val)
        elif sec == "link":
            d["per_link_flits"][key] = int(val)
        elif sec == "busy":
            d["per_node_busy_cycles"][key] = int(val)
        else:
            raise ValueError(f"unknown CSV section {sec!r}")
    out = []
    for i in sorted(runs):
        d = runs[i]
        stated_fps = d.pop("frames_per_second")
        r = RunReport(**d)
        if r.frames_per_second != stated_fps:
            raise ValueError(f"run {i}: frames_per_second {stated_fps} inconsistent with "
                             f"frames/clock/cycles ({r.frames_per_second})")
        out.append(r)
    return out


def manifest(reports, soc_file=None, dataflow_file=None, extra=None) -> str:
    doc = {"soc": str(soc_file) if soc_file else None,
           "dataflow": str(dataflow_file) if dataflow_file else None,
           "runs": [asdict(r) for r in reports]}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def dram_table(reports) -> list[dict]:
    """Relative DRAM accesses per mode, normalized to the p2p run when present."""
    by_mode = {r.mode: r for r in reports}
    ref = by_mode.get("p2p") or reports[-1]
    rows = []
    for r in reports:
        rows.append({"mode": r.mode, "dram_read_words": r.dram_read_words,
                     "dram_write_words": r.dram_write_words, "dram_words": r.dram_words,
                     "relative_to_p2p": r.dram_words / ref.dram_words if ref.dram_words else 0.0})
    return rows


def throughput_table(reports) -> list[dict]:
    by_mode = {r.mode: r for r in reports}
    base = by_mode.get("serial") or reports[0]
    return [{"mode": r.mode, "total_cycles": r.total_cycles,
             "frames_per_second": r.frames_per_second,
             "speedup_vs_serial": r.frames_per_second / base.frames_per_second
             if base.frames_per_second else 0.0} for r in reports]


def format_table(rows: list[dict]) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    cells = [[f"{v:.4g}" if isinstance(v, float) else str(v) for v in r.values()] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)
