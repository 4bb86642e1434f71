"""Multi-plane 2D-mesh NoC with XY routing and wormhole switching.

Every plane is a full copy of the routers' input queues and of the links. A
packet is split into one header flit plus one flit per 64-bit payload word.
Flits move at most one per link per plane per cycle; the header locks an
output port until the tail flit has passed it.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ConfigError


class Coord(NamedTuple):
    x: int
    y: int

    def __str__(self):
        return f"({self.x},{self.y})"


class Plane(IntEnum):
    DMA_REQ = 0
    DMA_RSP = 1
    CONTROL = 2


class MsgType(Enum):
    DMA_LOAD_REQ = "DmaLoadReq"
    DMA_LOAD_RSP = "DmaLoadRsp"
    DMA_STORE = "DmaStore"
    DMA_STORE_ACK = "DmaStoreAck"
    P2P_LOAD_REQ = "P2pLoadReq"
    P2P_LOAD_RSP = "P2pLoadRsp"
    CONFIG_WRITE = "ConfigWrite"
    CONFIG_READ = "ConfigRead"
    CONFIG_READ_RSP = "ConfigReadRsp"
    INTERRUPT = "Interrupt"

    @property
    def plane(self) -> Plane:
        return PLANE_OF[self]


# Requests (and store data) travel towards memory or the p2p sender on one
# plane, all data responses on another, so neither can block the other.
PLANE_OF = {
    MsgType.DMA_LOAD_REQ: Plane.DMA_REQ,
    MsgType.DMA_STORE: Plane.DMA_REQ,
    MsgType.P2P_LOAD_REQ: Plane.DMA_REQ,
    MsgType.DMA_LOAD_RSP: Plane.DMA_RSP,
    MsgType.DMA_STORE_ACK: Plane.DMA_RSP,
    MsgType.P2P_LOAD_RSP: Plane.DMA_RSP,
    MsgType.CONFIG_WRITE: Plane.CONTROL,
    MsgType.CONFIG_READ: Plane.CONTROL,
    MsgType.CONFIG_READ_RSP: Plane.CONTROL,
    MsgType.INTERRUPT: Plane.CONTROL,
}

_EMPTY = np.zeros(0, dtype=np.uint64)


@dataclass(eq=False)
class Packet:
    src: Coord
    dst: Coord
    msg_type: MsgType
    payload: np.ndarray = field(default_factory=lambda: _EMPTY)
    address: int = 0
    size: int = 0
    chunk_id: int = -1
    reg: int = 0
    value: int = 0
    error: bool = False
    # set by the fabric
    pid: int = -1
    inject_cycle: int = -1
    deliver_cycle: int = -1
    path: list = field(default_factory=list)
    on_injected: Optional[Callable[["Packet"], None]] = None

    def __post_init__(self):
        self.src = Coord(*self.src)
        self.dst = Coord(*self.dst)
        self.payload = np.asarray(self.payload, dtype=np.uint64)

    @property
    def plane(self) -> Plane:
        return PLANE_OF[self.msg_type]

    @property
    def length(self) -> int:
        return len(self.payload)

    @property
    def n_flits(self) -> int:
        return 1 + len(self.payload)


class Port(IntEnum):
    # index order doubles as the arbitration tie-break order
    LOCAL = 0
    NORTH = 1
    SOUTH = 2
    EAST = 3
    WEST = 4


_OPPOSITE = {Port.NORTH: Port.SOUTH, Port.SOUTH: Port.NORTH,
             Port.EAST: Port.WEST, Port.WEST: Port.EAST}
N_PORTS = 5


@dataclass
class NocConfig:
    rows: int
    cols: int
    queue_depth: int = 4
    router_latency: int = 1
    flit_bits: int = 64
    max_packet_words: int = 256

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"mesh must be at least 1x1, got {self.rows}x{self.cols}")
        if self.queue_depth < 1:
            raise ConfigError("queue_depth must be >= 1")
        if self.router_latency < 1:
            raise ConfigError("router_latency must be >= 1")
        if self.max_packet_words < 1:
            raise ConfigError("max_packet_words must be >= 1")

    def check(self, c: Coord):
        if not (0 <= c[0] < self.cols and 0 <= c[1] < self.rows):
            raise ConfigError(f"coordinate {tuple(c)} outside {self.cols}x{self.rows} mesh")


def route_xy(src, dst, cfg: NocConfig | None = None) -> list[Coord]:
    """Hops visited going from ``src`` to ``dst``, X first then Y.

    ``src`` is excluded and ``dst`` included, so a self-route is empty.
    """
    if cfg is not None:
        cfg.check(src)
        cfg.check(dst)
    x, y = src
    path = []
    step = 1 if dst[0] > x else -1
    while x != dst[0]:
        x += step
        path.append(Coord(x, y))
    step = 1 if dst[1] > y else -1
    while y != dst[1]:
        y += step
        path.append(Coord(x, y))
    return path


def _out_port(here: Coord, dst: Coord) -> Port:
    if dst.x > here.x:
        return Port.EAST
    if dst.x < here.x:
        return Port.WEST
    if dst.y > here.y:
        return Port.SOUTH
    if dst.y < here.y:
        return Port.NORTH
    return Port.LOCAL


class Mesh:
    """The fabric. Drive it with :meth:`inject` and one :meth:`step` per cycle."""

    def __init__(self, cfg: NocConfig, trace_flits: bool = False):
        self.cfg = cfg
        self.n_routers = cfg.rows * cfg.cols
        R = self.n_routers
        self.coords = [Coord(r % cfg.cols, r // cfg.cols) for r in range(R)]
        # neighbour router id per (router, out port), -1 at the mesh edge
        self._next = []
        for r in range(R):
            x, y = self.coords[r]
            nb = [-1] * N_PORTS
            if y > 0:
                nb[Port.NORTH] = r - cfg.cols
            if y < cfg.rows - 1:
                nb[Port.SOUTH] = r + cfg.cols
            if x < cfg.cols - 1:
                nb[Port.EAST] = r + 1
            if x > 0:
                nb[Port.WEST] = r - 1
            self._next.append(nb)
        planes = len(Plane)
        self.queues = [[deque() for _ in range(R * N_PORTS)] for _ in range(planes)]
        self._lock = [[-1] * (R * N_PORTS) for _ in range(planes)]     # out -> input port
        self._in_out = [[-1] * (R * N_PORTS) for _ in range(planes)]   # input -> out port
        self._rr = [[0] * (R * N_PORTS) for _ in range(planes)]
        self._occ = [[0] * R for _ in range(planes)]
        self._active = [set() for _ in range(planes)]
        self._streams = [dict() for _ in range(planes)]  # router -> [pkt, next_idx, next_cycle]
        self.link_flits = [[0] * (R * N_PORTS) for _ in range(planes)]
        self.flow_flits: dict[tuple, int] = {}
        self.flits_injected = 0
        self.flits_ejected = 0
        self.max_occupancy = 0
        self.packets_delivered = 0
        self._ids = itertools.count()
        self.trace_flits = trace_flits
        self.flit_trace: list[tuple] = []

    # -- helpers ---------------------------------------------------------
    def rid(self, c) -> int:
        self.cfg.check(c)
        return c[1] * self.cfg.cols + c[0]

    @property
    def in_flight(self) -> int:
        return sum(sum(o) for o in self._occ)

    @property
    def busy(self) -> bool:
        return any(self._active) or any(self._streams)

    def local_queue_free(self, at, plane: Plane) -> bool:
        r = self.rid(at)
        return (r not in self._streams[plane]
                and len(self.queues[plane][r * N_PORTS]) < self.cfg.queue_depth)

    def queue_lengths(self):
        for plane in Plane:
            for i, q in enumerate(self.queues[plane]):
                yield plane, self.coords[i // N_PORTS], Port(i % N_PORTS), len(q)

    def per_link_flits(self) -> dict[str, int]:
        """Flit count per directed inter-router link, keyed ``"(x,y)->(x,y)/Plane"``."""
        out = {}
        for plane in Plane:
            counts = self.link_flits[plane]
            for i, n in enumerate(counts):
                if n:
                    r, p = divmod(i, N_PORTS)
                    nb = self._next[r][p]
                    out[f"{self.coords[r]}->{self.coords[nb]}/{plane.name}"] = n
        return dict(sorted(out.items()))

    def flits_of(self, msg_type: MsgType, src=None, dst=None) -> int:
        """Link traversals by flits of ``msg_type``, optionally for one src/dst pair."""
        total = 0
        for (s, d, m), n in self.flow_flits.items():
            if m is msg_type and (src is None or s == src) and (dst is None or d == dst):
                total += n
        return total

    # -- injection ---------------------------------------------------------
    def inject(self, pkt: Packet, at, cycle: int) -> bool:
        """Start serializing ``pkt`` into its plane's local input queue.

        Returns False (backpressure) if the queue is full or another packet
        of the same plane is still being serialized at this tile.
        """
        at = Coord(*at)
        if at != pkt.src:
            raise ConfigError(f"packet from {pkt.src} injected at {at}")
        if pkt.length > self.cfg.max_packet_words:
            raise ConfigError(f"packet of {pkt.length} words exceeds max_packet_words="
                              f"{self.cfg.max_packet_words}")
        self.rid(pkt.dst)
        plane = pkt.plane
        r = self.rid(at)
        q = self.queues[plane][r * N_PORTS]
        if r in self._streams[plane] or len(q) >= self.cfg.queue_depth:
            return False
        pkt.pid = next(self._ids)
        pkt.inject_cycle = cycle
        pkt.path = [at]
        self._push(plane, r, q, (cycle + 1, pkt, 0))
        if pkt.n_flits > 1:
            self._streams[plane][r] = [pkt, 1, cycle + 1]
        elif pkt.on_injected is not None:
            pkt.on_injected(pkt)
        return True

    def _push(self, plane, r, q, flit):
        q.append(flit)
        self.flits_injected += 1
        self._occ[plane][r] += 1
        self._active[plane].add(r)
        if len(q) > self.max_occupancy:
            self.max_occupancy = len(q)

    # -- cycle -------------------------------------------------------------
    def step(self, cycle: int) -> list[tuple[Packet, Coord]]:
        """Advance every plane by one cycle; return packets whose tail was ejected."""
        delivered = []
        for plane in Plane:
            if self._active[plane]:
                self._switch(plane, cycle, delivered)
            if self._streams[plane]:
                self._serialize(plane, cycle)
        return delivered

    def _serialize(self, plane, cycle):
        streams = self._streams[plane]
        depth = self.cfg.queue_depth
        for r in sorted(streams):
            st = streams[r]
            pkt, idx, when = st
            q = self.queues[plane][r * N_PORTS]
            if cycle < when or len(q) >= depth:
                continue
            self._push(plane, r, q, (cycle + 1, pkt, idx))
            idx += 1
            if idx == pkt.n_flits:
                del streams[r]
                if pkt.on_injected is not None:
                    pkt.on_injected(pkt)
            else:
                st[1] = idx
                st[2] = cycle + 1

    def _switch(self, plane, cycle, delivered):
        queues = self.queues[plane]
        lock = self._lock[plane]
        in_out = self._in_out[plane]
        rr = self._rr[plane]
        occ = self._occ[plane]
        active = self._active[plane]
        links = self.link_flits[plane]
        depth = self.cfg.queue_depth
        rl = self.cfg.router_latency
        coords = self.coords
        for r in sorted(active):
            base = r * N_PORTS
            here = coords[r]
            # one candidate (the queue head) per input port
            moving = {}      # out port -> input port already owning it
            requests = {}    # out port -> input ports whose header wants it
            for inp in range(N_PORTS):
                q = queues[base + inp]
                if not q:
                    continue
                ready, pkt, idx = q[0]
                if ready > cycle:
                    continue
                if idx:
                    moving[in_out[base + inp]] = inp
                else:
                    out = _out_port(here, pkt.dst)
                    if lock[base + out] < 0:
                        requests.setdefault(out, []).append(inp)
            for out, inps in requests.items():
                if len(inps) == 1:
                    win = inps[0]
                else:
                    ptr = rr[base + out]
                    win = min(inps, key=lambda i: (i - ptr) % N_PORTS)
                if self._can_accept(plane, r, out, depth):
                    rr[base + out] = (win + 1) % N_PORTS
                    lock[base + out] = win
                    in_out[base + win] = out
                    moving[out] = win
            for out, inp in moving.items():
                if not self._can_accept(plane, r, out, depth):
                    continue
                q = queues[base + inp]
                _, pkt, idx = q.popleft()
                occ[r] -= 1
                tail = idx == pkt.n_flits - 1
                if tail:
                    lock[base + out] = -1
                    in_out[base + inp] = -1
                if out == Port.LOCAL:
                    self.flits_ejected += 1
                    if self.trace_flits:
                        self.flit_trace.append((cycle, pkt.pid, idx, here, "eject"))
                    if tail:
                        pkt.deliver_cycle = cycle
                        self.packets_delivered += 1
                        delivered.append((pkt, here))
                    continue
                nb = self._next[r][out]
                links[base + out] += 1
                key = (pkt.src, pkt.dst, pkt.msg_type)
                self.flow_flits[key] = self.flow_flits.get(key, 0) + 1
                nq = queues[nb * N_PORTS + _OPPOSITE[out]]
                nq.append((cycle + rl, pkt, idx))
                occ[nb] += 1
                active.add(nb)
                if len(nq) > self.max_occupancy:
                    self.max_occupancy = len(nq)
                if idx == 0:
                    pkt.path.append(coords[nb])
                if self.trace_flits:
                    self.flit_trace.append((cycle, pkt.pid, idx, coords[nb], "hop"))
        for r in [r for r in active if occ[r] == 0]:
            active.discard(r)

    def _can_accept(self, plane, r, out, depth):
        if out == Port.LOCAL:
            return True
        nb = self._next[r][out]
        return len(self.queues[plane][nb * N_PORTS + _OPPOSITE[out]]) < depth
