"""Software runtime on the processor tile.

Allocates one contiguous DRAM region for a dataflow, resolves device names to
tiles, validates the dataflow, programs the accelerators over the control
plane and runs them in one of three modes:

``serial``
    one accelerator at a time in topological order, each over all frames;
    every edge goes through DRAM.
``pipe``
    one worker per accelerator instance, one invocation per frame; the
    runtime lets a consumer start frame k only after its producers finished
    frame k, with intermediate frames in DRAM double buffers.
``p2p``
    edges marked P2P are synchronized by the hardware; their endpoints are
    started once for all frames. DMA edges keep the runtime frame ordering.
"""
from __future__ import annotations

import hashlib
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AcceleratorError, AllocationError, ValidationError
from .noc import Coord
from .p2p import MAX_SOURCES, P2pConfig
from .report import RunReport
from .tiles import IN_OFFSET, IN_SLOTS, IN_WORDS, MAX_SEGMENTS, Reg

log = logging.getLogger(__name__)

MODES = ("serial", "pipe", "p2p")
EDGE_MODES = ("DMA", "P2P")
NODE_PARAMS = {"start_delay"}


@dataclass
class Node:
    name: str
    kernel: str
    params: dict = field(default_factory=dict)
    instances: int = 1


@dataclass
class Edge:
    src: str
    dst: str
    mode: str = "DMA"


@dataclass
class DataflowGraph:
    """Accelerator invocations and their data dependencies.

    File schema (JSON)::

        {"name": "...",
         "nodes": [{"name": "dev", "kernel": "mlp", "params": {}, "instances": 1}],
         "edges": [{"src": "a", "dst": "b", "mode": "DMA" | "P2P"}],
         "io": {"input": {"generator": "image", "seed": 0}}}

    Edge order matters: a node's inputs are concatenated in the order its
    in-edges are listed. Unknown keys and node params are ignored.
    """
    nodes: list[Node]
    edges: list[Edge] = field(default_factory=list)
    io: dict = field(default_factory=dict)
    name: str = "dataflow"

    @classmethod
    def from_dict(cls, d: dict) -> "DataflowGraph":
        nodes = [Node(n["name"], n["kernel"], dict(n.get("params", {})),
                      int(n.get("instances", 1))) for n in d.get("nodes", [])]
        edges = [Edge(e["src"], e["dst"], str(e.get("mode", "DMA")).upper())
                 for e in d.get("edges", [])]
        return cls(nodes, edges, dict(d.get("io", {})), d.get("name", "dataflow"))

    @classmethod
    def from_file(cls, path) -> "DataflowGraph":
        g = cls.from_dict(json.loads(Path(path).read_text()))
        if g.name == "dataflow":
            g.name = Path(path).stem
        return g

    def to_dict(self) -> dict:
        return {"name": self.name,
                "nodes": [vars(n) for n in self.nodes],
                "edges": [vars(e) for e in self.edges],
                "io": self.io}

    def with_modes(self, mode: str) -> "DataflowGraph":
        """Copy with every edge set to ``mode``."""
        return DataflowGraph([Node(n.name, n.kernel, dict(n.params), n.instances)
                              for n in self.nodes],
                             [Edge(e.src, e.dst, mode) for e in self.edges],
                             dict(self.io), self.name)


class DeviceRegistry:
    """Device name -> (coordinate, accelerator kind), filled by boot-time probing.

    Coordinates stay inside the runtime; dataflows only name devices. A node
    with ``instances=k > 1`` binds devices ``name.0`` .. ``name.{k-1}``.
    """

    def __init__(self, devices: dict):
        self.devices = {n: (Coord(*c), k) for n, (c, k) in devices.items()}

    def __contains__(self, name):
        return name in self.devices

    def __len__(self):
        return len(self.devices)

    def names(self):
        return sorted(self.devices)

    def coord(self, name) -> Coord:
        return self.devices[name][0]

    def kind(self, name) -> str:
        return self.devices[name][1]

    def resolve(self, name: str, instances: int = 1) -> list[str]:
        if instances == 1 and name in self.devices:
            return [name]
        names = [f"{name}.{i}" for i in range(instances)]
        missing = [n for n in names if n not in self.devices]
        if missing:
            raise KeyError(", ".join(missing))
        return names


@dataclass(frozen=True)
class BufferHandle:
    base: int
    length: int

    @property
    def end(self):
        return self.base + self.length


class Allocator:
    """Bump-pointer contiguous allocation in simulated DRAM."""

    def __init__(self, memory, start: int = 0):
        self.memory = memory
        self.next = start
        self.live: list[BufferHandle] = []

    def alloc(self, size: int) -> BufferHandle:
        if size <= 0:
            raise AllocationError(f"allocation of {size} words")
        if self.next + size > self.memory.words:
            raise AllocationError(f"DRAM exhausted: {size} words requested, "
                                  f"{self.memory.words - self.next} left")
        h = BufferHandle(self.next, size)
        self.next += size
        self.memory.host_write(h.base, np.zeros(size, dtype=np.uint64))
        self.live.append(h)
        return h

    def reset(self):
        self.next = 0
        self.live.clear()


@dataclass
class NodePlan:
    name: str
    kernel: str
    devices: list[str]
    coords: list[Coord]
    in_words: int
    out_words: int
    inputs: list[Edge]          # in-edge order = input concatenation order
    outputs: list[Edge]
    params: dict
    p2p: P2pConfig = P2pConfig()


@dataclass
class Plan:
    graph: DataflowGraph
    order: list[str]
    nodes: dict[str, NodePlan]
    input_words: int

    def p2p_config(self, name: str) -> P2pConfig:
        return self.nodes[name].p2p

    @property
    def sinks(self) -> list[str]:
        return [n for n in self.order if not self.nodes[n].outputs]

    @property
    def sources(self) -> list[str]:
        return [n for n in self.order if not self.nodes[n].inputs]


def _topo_order(names, edges):
    indeg = {n: 0 for n in names}
    succ = defaultdict(list)
    for e in edges:
        succ[e.src].append(e.dst)
        indeg[e.dst] += 1
    ready = [n for n in names if indeg[n] == 0]
    order = []
    while ready:
        n = ready.pop(0)
        order.append(n)
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
    return order, [n for n in names if indeg[n] > 0]


def validate(graph: DataflowGraph, registry: DeviceRegistry, accelerators=None) -> Plan:
    """Check a dataflow against the device registry and derive each node's
    P2P_REG contents. Raises :class:`ValidationError` listing every problem.

    ``accelerators`` maps device name -> tile, used to check buffer sizes; the
    kernels' frame sizes are taken from there.
    """
    issues = []
    names = [n.name for n in graph.nodes]
    by_name = {}
    for n in graph.nodes:
        if n.name in by_name:
            issues.append(f"node {n.name!r}: duplicate name")
        by_name[n.name] = n
        if n.instances < 1:
            issues.append(f"node {n.name!r}: instances must be >= 1")
        extra = set(n.params) - NODE_PARAMS
        if extra:
            log.info("node %s: ignoring params %s", n.name, sorted(extra))
    if not graph.nodes:
        issues.append("dataflow has no nodes")
    devices = {}
    for n in graph.nodes:
        try:
            devs = registry.resolve(n.name, max(n.instances, 1))
        except KeyError as e:
            issues.append(f"node {n.name!r}: no such device(s) {e.args[0]}")
            continue
        for d in devs:
            if registry.kind(d) != n.kernel:
                issues.append(f"node {n.name!r}: device {d} implements "
                              f"{registry.kind(d)!r}, not {n.kernel!r}")
        devices[n.name] = devs
    used = defaultdict(list)
    for n, devs in devices.items():
        for d in devs:
            used[d].append(n)
    for d, ns in used.items():
        if len(ns) > 1:
            issues.append(f"device {d} bound to several nodes {ns}")

    ins = defaultdict(list)
    outs = defaultdict(list)
    for i, e in enumerate(graph.edges):
        tag = f"edge {i} ({e.src}->{e.dst})"
        if e.mode not in EDGE_MODES:
            issues.append(f"{tag}: mode must be DMA or P2P, got {e.mode!r}")
        if e.src not in by_name or e.dst not in by_name:
            issues.append(f"{tag}: unknown node")
            continue
        if e.src == e.dst:
            issues.append(f"{tag}: self-loop makes the dataflow cyclic")
            continue
        ins[e.dst].append(e)
        outs[e.src].append(e)
    good_edges = [e for es in ins.values() for e in es]
    order, cyclic = _topo_order(names, good_edges)
    if cyclic:
        issues.append(f"dataflow is cyclic through nodes {cyclic}")

    words = {}
    if accelerators is not None:
        for n, devs in devices.items():
            k = accelerators[devs[0]].kernel
            words[n] = (k.in_words, k.out_words)
    input_words = None
    plans = {}
    for n in names:
        node = by_name[n]
        in_e, out_e = ins.get(n, []), outs.get(n, [])
        if len(in_e) > MAX_SEGMENTS:
            issues.append(f"node {n!r}: {len(in_e)} inputs, at most {MAX_SEGMENTS} supported")
        p2p_in = [e for e in in_e if e.mode == "P2P"]
        if p2p_in and len(p2p_in) != len(in_e):
            issues.append(f"node {n!r}: mixes DMA and P2P inputs")
        src_tiles = [c for e in p2p_in for c in
                     (registry.coord(d) for d in devices.get(e.src, []))]
        if len(src_tiles) > MAX_SOURCES:
            issues.append(f"node {n!r}: p2p fan-in of {len(src_tiles)} source tiles, "
                          f"allowed 1 to {MAX_SOURCES}")
        if len(set(src_tiles)) != len(src_tiles):
            issues.append(f"node {n!r}: the same source tile feeds several p2p inputs")
        if n in words:
            need = words[n][0]
            if in_e:
                have = [words[e.src][1] for e in in_e if e.src in words]
                if len(have) == len(in_e) and sum(have) != need:
                    issues.append(f"node {n!r}: inputs provide {have} words per frame, "
                                  f"kernel consumes {need}")
            else:
                if input_words is None:
                    input_words = need
                elif input_words != need:
                    issues.append(f"node {n!r}: source nodes disagree on the input frame size "
                                  f"({need} vs {input_words})")
        p2p_out = [e for e in out_e if e.mode == "P2P"]
        if len(p2p_out) > 1:
            log.warning("node %s: p2p fan-out of %d is experimental", n, len(p2p_out))
        cfg = P2pConfig(store_enabled=bool(p2p_out), load_enabled=bool(p2p_in),
                        sources=tuple(src_tiles[:MAX_SOURCES]))
        if n in devices:
            plans[n] = NodePlan(n, node.kernel, devices[n],
                                [registry.coord(d) for d in devices[n]],
                                words.get(n, (0, 0))[0], words.get(n, (0, 0))[1],
                                in_e, out_e, dict(node.params), cfg)
    if issues:
        raise ValidationError(issues)
    return Plan(graph, order, plans, input_words or 0)


def effective_plan(plan: Plan, mode: str) -> Plan:
    """The plan as executed in ``mode``: serial and pipe run every edge via DMA."""
    if mode not in MODES:
        raise ValidationError([f"unknown mode {mode!r}; expected one of {MODES}"])
    if mode == "p2p":
        return plan
    nodes = {}
    for n, p in plan.nodes.items():
        nodes[n] = NodePlan(p.name, p.kernel, p.devices, p.coords, p.in_words, p.out_words,
                            [Edge(e.src, e.dst, "DMA") for e in p.inputs],
                            [Edge(e.src, e.dst, "DMA") for e in p.outputs], p.params,
                            P2pConfig())
    return Plan(plan.graph, plan.order, nodes, plan.input_words)


def generate_input(io: dict, frames: int, words: int, seed: int) -> np.ndarray:
    """Frame data for the primary input buffer, shape (frames, words)."""
    src_cfg = io.get("input", {})
    gen = src_cfg.get("generator", "image")
    rng = np.random.default_rng([seed, int(src_cfg.get("seed", 0))])
    if gen == "image":
        return rng.integers(0, 256, size=(frames, words)).astype(np.uint64)
    if gen == "dark_image":
        return rng.integers(0, 64, size=(frames, words)).astype(np.uint64)
    if gen == "random_words":
        return rng.integers(0, 1 << 32, size=(frames, words)).astype(np.uint64)
    if gen == "zeros":
        return np.zeros((frames, words), dtype=np.uint64)
    raise ValidationError([f"unknown input generator {gen!r}"])


class FrameBoard:
    """Per-node frame completion flags with events the workers wait on."""

    def __init__(self, sim):
        self.sim = sim
        self.done = defaultdict(set)
        self._waiting = defaultdict(list)
        self.waits: dict[str, str] = {}

    def mark(self, node, frame):
        self.done[node].add(frame)
        for ev in self._waiting.pop((node, frame), []):
            ev.succeed()

    def wait(self, node, frame):
        ev = self.sim.event(f"{node}[{frame}]")
        if frame < 0 or frame in self.done[node]:
            ev.succeed()
        else:
            self._waiting[(node, frame)].append(ev)
        return ev


class Runtime:
    def __init__(self, soc):
        self.soc = soc
        if soc.registry is None:
            soc.boot()
        self.registry = soc.registry
        self.proc = soc.processor
        self.alloc = Allocator(soc.memory) if soc.memory is not None else None

    def validate(self, graph: DataflowGraph) -> Plan:
        return validate(graph, self.registry, self.soc.accelerators)

    # -- buffers -----------------------------------------------------------
    def _layout(self, plan: Plan, frames: int, mode: str):
        """Allocate the input, intermediate and output buffers of one run."""
        self.alloc.reset()
        bufs = {}
        slots = {}
        inp = self.alloc.alloc(frames * plan.input_words)
        for n in plan.order:
            p = plan.nodes[n]
            dma_consumers = [e for e in p.outputs if e.mode == "DMA"]
            if not p.outputs:
                slots[n] = frames
            elif dma_consumers:
                inst = max([len(p.devices)] + [len(plan.nodes[e.dst].devices)
                                                for e in dma_consumers])
                slots[n] = frames if mode == "serial" else min(frames, 2 * inst)
            else:
                continue
            bufs[n] = self.alloc.alloc(slots[n] * p.out_words)
        return inp, bufs, slots

    # -- execution -----------------------------------------------------------
    def run(self, plan: Plan, frames: int, mode: str, inputs=None, seed: int = 0) -> RunReport:
        if frames <= 0:
            raise ValidationError([f"frames must be >= 1, got {frames}"])
        plan = effective_plan(plan, mode)
        soc, sim = self.soc, self.soc.sim
        inp, bufs, slots = self._layout(plan, frames, mode)
        if inputs is None:
            inputs = generate_input(plan.graph.io, frames, plan.input_words, seed)
        inputs = np.asarray(inputs, dtype=np.uint64).reshape(frames, plan.input_words)
        soc.memory.host_write(inp.base, inputs.ravel())
        window = (inp.base, self.alloc.next - inp.base)

        t0 = sim.now
        dram0 = soc.dram_counters
        links0 = soc.mesh.per_link_flits()
        busy0 = {d: a.busy_cycles for d, a in soc.accelerators.items()}
        inj0, ej0 = soc.mesh.flits_injected, soc.mesh.flits_ejected
        log0 = len(soc.packet_log)

        board = FrameBoard(sim)
        self.board = board
        ctx = dict(plan=plan, frames=frames, mode=mode, inp=inp, bufs=bufs, slots=slots,
                   window=window, board=board)
        if mode == "serial":
            procs = [sim.process(self._serial(ctx), "runtime.serial")]
        else:
            procs = []
            for n in plan.order:
                p = plan.nodes[n]
                for j, dev in enumerate(p.devices):
                    procs.append(sim.process(self._worker(ctx, p, j), f"worker.{dev}"))
        sim.run(sim.all_of([pr.finished for pr in procs], "all_done"))
        end = sim.now
        # let trailing control writes (the CMD clears) reach their tiles
        sim.run(lambda: not soc.mesh.busy and not soc._pending)

        outputs = {n: soc.memory.host_read(bufs[n].base, bufs[n].length)
                   .reshape(frames, plan.nodes[n].out_words) for n in plan.sinks}
        self.last_outputs = outputs
        self.last_buffers = bufs
        h = hashlib.sha256()
        for n in sorted(outputs):
            h.update(n.encode())
            h.update(outputs[n].tobytes())
        th = hashlib.sha256(repr(soc.packet_log[log0:]).encode())
        links = soc.mesh.per_link_flits()
        link_delta = {k: v - links0.get(k, 0) for k, v in links.items() if v - links0.get(k, 0)}
        busy = defaultdict(int)
        for n, p in plan.nodes.items():
            for d in p.devices:
                busy[n] += soc.accelerators[d].busy_cycles - busy0[d]
        dram = soc.dram_counters
        inj = soc.mesh.flits_injected - inj0
        ej = soc.mesh.flits_ejected - ej0
        return RunReport(
            mode=mode, dataflow=plan.graph.name, frames=frames, seed=seed,
            total_cycles=end - t0, clock_mhz=soc.cfg.clock_mhz,
            dram_read_words=dram[0] - dram0[0], dram_write_words=dram[1] - dram0[1],
            config_fingerprint=soc.cfg.fingerprint(), output_digest=h.hexdigest()[:16],
            trace_digest=th.hexdigest()[:16], flits_injected=inj, flits_delivered=ej,
            flits_in_flight=soc.mesh.in_flight, max_queue_occupancy=soc.mesh.max_occupancy,
            per_link_flits=dict(sorted(link_delta.items())),
            per_node_busy_cycles=dict(sorted(busy.items())))

    def _program(self, ctx, p: NodePlan, j: int):
        """Static registers of instance ``j``: buffers, segments, p2p routing."""
        plan, bufs, slots = ctx["plan"], ctx["bufs"], ctx["slots"]
        base, length = ctx["window"]
        coord = p.coords[j]
        w = self.proc.config_write
        w(coord, Reg.TLB_BASE, base)
        w(coord, Reg.TLB_BOUND, length)
        sources = list(p.p2p.sources)
        mask = groups = 0
        segs = p.inputs or [None]
        w(coord, Reg.N_IN_SEGS, len(segs))
        for i, e in enumerate(segs):
            if e is None:
                words, off, nslots = p.in_words, ctx["inp"].base - base, ctx["frames"]
            else:
                src = plan.nodes[e.src]
                words = src.out_words
                if e.mode == "P2P":
                    mask |= 1 << i
                    g = 0
                    for c in src.coords:
                        g |= 1 << sources.index(c)
                    groups |= g << (4 * i)
                    off, nslots = 0, 0
                else:
                    off, nslots = bufs[e.src].base - base, slots[e.src]
            w(coord, IN_WORDS[i], words)
            w(coord, IN_OFFSET[i], off)
            w(coord, IN_SLOTS[i], nslots)
        w(coord, Reg.IN_P2P_MASK, mask)
        w(coord, Reg.IN_GROUPS, groups)
        w(coord, Reg.P2P, p.p2p.pack())
        store_dma = p.name in bufs
        w(coord, Reg.STORE_DMA, int(store_dma))
        w(coord, Reg.OUT_WORDS, p.out_words)
        if store_dma:
            w(coord, Reg.DST_OFFSET, bufs[p.name].base - base)
            w(coord, Reg.DST_SLOTS, slots[p.name])
        w(coord, Reg.P2P_READERS, sum(1 for e in p.outputs if e.mode == "P2P"))

    def _invoke(self, ctx, p: NodePlan, j: int, first: int, step: int, count: int):
        coord = p.coords[j]
        w = self.proc.config_write
        w(coord, Reg.FRAME_FIRST, first)
        w(coord, Reg.FRAME_STEP, step)
        w(coord, Reg.CONF_SIZE, count * p.in_words)
        irq = self.proc.interrupt(coord)
        w(coord, Reg.CMD, 1)
        pkt = yield irq
        w(coord, Reg.CMD, 0)
        if pkt.error:
            raise AcceleratorError(f"device {p.devices[j]} at {coord} reported an error "
                                   f"(frames {first}..+{count})")

    def _serial(self, ctx):
        plan, frames = ctx["plan"], ctx["frames"]
        for n in plan.order:
            p = plan.nodes[n]
            for j in range(len(p.devices)):
                count = len(range(j, frames, len(p.devices)))
                if count == 0:
                    continue
                self._program(ctx, p, j)
                yield from self._invoke(ctx, p, j, j, len(p.devices), count)

    def _worker(self, ctx, p: NodePlan, j: int):
        plan, frames, board = ctx["plan"], ctx["frames"], ctx["board"]
        n_inst = len(p.devices)
        mine = list(range(j, frames, n_inst))
        if not mine:
            return
        delay = int(p.params.get("start_delay", 0))
        if delay:
            yield delay
        self._program(ctx, p, j)
        dma_in = [e for e in p.inputs if e.mode == "DMA"]
        dma_out = [e for e in p.outputs if e.mode == "DMA"]
        if not dma_in and not dma_out:
            # hardware-synchronized: one invocation over all of this instance's frames
            yield from self._invoke(ctx, p, j, j, n_inst, len(mine))
            for f in mine:
                board.mark(p.name, f)
            return
        out_slots = ctx["slots"].get(p.name, frames)
        for f in mine:
            for e in dma_in:
                board.waits[p.devices[j]] = f"frame {f} waits for {e.src}"
                yield board.wait(e.src, f)
            for e in dma_out:
                board.waits[p.devices[j]] = f"frame {f} waits for {e.dst} to free slot"
                yield board.wait(e.dst, f - out_slots)
            board.waits.pop(p.devices[j], None)
            yield from self._invoke(ctx, p, j, f, 1, 1)
            board.mark(p.name, f)


def run_dataflow(soc, graph: DataflowGraph, frames: int, mode: str, seed: int = 0,
                 inputs=None) -> RunReport:
    rt = Runtime(soc)
    plan = rt.validate(graph)
    return rt.run(plan, frames, mode, inputs=inputs, seed=seed)
