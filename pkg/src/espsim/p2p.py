"""Receiver-initiated accelerator-to-accelerator transfers.

A consumer asks its source for a chunk only when its input buffer has room
for it. The producer keeps the finished chunk in its own tile until the
request arrives and only then puts the data on the NoC, so a chunk nobody
asked for never occupies a link. Requests ride the DMA request plane and data
the DMA response plane, using the producer's response-side send queue that
plain DMA never uses.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .noc import Coord, MsgType, Packet

MAX_SOURCES = 4
_COORD_BITS = 6


@dataclass(frozen=True)
class P2pConfig:
    store_enabled: bool = False
    load_enabled: bool = False
    sources: tuple = ()

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    def check(self, accelerator_coords=None):
        if len(self.sources) > MAX_SOURCES:
            raise ConfigError(f"p2p load supports 1 to {MAX_SOURCES} source tiles, "
                              f"got {len(self.sources)}")
        if self.load_enabled and not self.sources:
            raise ConfigError("p2p load enabled without any source tile")
        for s in self.sources:
            if not all(0 <= v < 1 << _COORD_BITS for v in s):
                raise ConfigError(f"source coordinate {tuple(s)} does not fit the register")
            if accelerator_coords is not None and Coord(*s) not in accelerator_coords:
                raise ConfigError(f"p2p source {tuple(s)} is not an accelerator tile")

    def pack(self) -> int:
        """Register layout: bit 0 store, bit 1 load, bits 2-4 source count,
        then 6-bit x and 6-bit y per source from bit 8."""
        self.check()
        v = int(self.store_enabled) | int(self.load_enabled) << 1 | len(self.sources) << 2
        for i, (x, y) in enumerate(self.sources):
            v |= (x | y << _COORD_BITS) << (8 + 2 * _COORD_BITS * i)
        return v

    @classmethod
    def unpack(cls, v: int) -> "P2pConfig":
        n = (v >> 2) & 0x7
        mask = (1 << _COORD_BITS) - 1
        sources = []
        for i in range(min(n, MAX_SOURCES)):
            c = v >> (8 + 2 * _COORD_BITS * i)
            sources.append(Coord(c & mask, (c >> _COORD_BITS) & mask))
        cfg = cls(bool(v & 1), bool(v & 2), tuple(sources))
        if n > MAX_SOURCES:
            raise ConfigError(f"p2p load supports 1 to {MAX_SOURCES} source tiles, got {n}")
        return cfg


def p2p_configure(tile, cfg: P2pConfig):
    """Program a tile's P2P_REG directly (the runtime does the same over the
    control plane)."""
    from .tiles import Status
    if tile.status != Status.IDLE:
        raise ConfigError(f"tile {tile.coord} is not idle")
    cfg.check(tile.soc.accelerator_coords if tile.soc is not None else None)
    tile.regs.set_p2p(cfg)


@dataclass
class PendingRequest:
    requester: Coord
    size: int
    chunk_id: int
    arrived: int


@dataclass
class P2pSendState:
    """Producer side: requests waiting for a chunk, and the one staged chunk."""
    pending: deque = field(default_factory=deque)
    staged_id: int = -1
    staged: np.ndarray | None = None
    readers_left: int = 0
    in_serialization: int = 0
    drained: object = None        # Event fired when the staged chunk is fully served
    served: list = field(default_factory=list)   # (chunk_id, requester, req_arrival, send_cycle)


def _serve(tile, req: PendingRequest):
    st = tile.p2p
    data = st.staged
    if req.size != len(data):
        tile.fault(f"p2p request for {req.size} words, staged chunk has {len(data)}")
    maxw = tile.soc.noc_cfg.max_packet_words
    st.readers_left -= 1
    st.served.append((st.staged_id, req.requester, req.arrived, tile.sim.now))
    chunks = range(0, max(len(data), 1), maxw)
    for off in chunks:
        pkt = Packet(tile.coord, req.requester, MsgType.P2P_LOAD_RSP,
                     payload=data[off:off + maxw], address=off, chunk_id=st.staged_id)
        st.in_serialization += 1
        pkt.on_injected = lambda _p: _sent(tile)
        tile.send(pkt)


def _sent(tile):
    st = tile.p2p
    st.in_serialization -= 1
    _check_drained(tile)


def _check_drained(tile):
    st = tile.p2p
    if st.staged is not None and st.readers_left == 0 and st.in_serialization == 0:
        st.staged = None
        ev, st.drained = st.drained, None
        ev.succeed()


def on_request(tile, pkt: Packet):
    """A P2pLoadReq reached the producer tile."""
    req = PendingRequest(pkt.src, pkt.size, pkt.chunk_id, tile.sim.now)
    tile.soc.p2p_log.append(("req", tile.sim.now, tile.coord, pkt.src, pkt.chunk_id))
    st = tile.p2p
    if st.staged is not None and req.chunk_id == st.staged_id and st.readers_left > 0:
        _serve(tile, req)
    else:
        st.pending.append(req)


def p2p_store(tile, chunk_id: int, data: np.ndarray, readers: int):
    """Stage one output chunk and stall until every reader has fetched it.

    Generator; the wrapper's STORE phase ends when it returns.
    """
    st = tile.p2p
    assert st.staged is None, "previous chunk still staged"
    st.staged_id = chunk_id
    st.staged = np.array(data, dtype=np.uint64)
    st.readers_left = readers
    st.drained = tile.sim.event(f"{tile.coord}.p2p_drained[{chunk_id}]")
    tile.stall_reason = f"p2p store of chunk {chunk_id} waiting for {readers} request(s)"
    for req in [r for r in st.pending if r.chunk_id == chunk_id]:
        if st.readers_left == 0:
            break
        st.pending.remove(req)
        _serve(tile, req)
    ev = st.drained
    _check_drained(tile)
    yield ev
    tile.stall_reason = None


def p2p_load(tile, source: Coord, chunk_id: int, size: int, buf_offset: int):
    """Fetch ``size`` words of chunk ``chunk_id`` from ``source`` into the
    input buffer at ``buf_offset``. Generator; returns once all words landed."""
    tile.reserve_in_buf(size)
    ev = tile.expect_data(MsgType.P2P_LOAD_RSP, buf_offset, size, source=source,
                          chunk_id=chunk_id)
    tile.stall_reason = f"p2p load of chunk {chunk_id} from {source}"
    tile.send(Packet(tile.coord, source, MsgType.P2P_LOAD_REQ, size=size, chunk_id=chunk_id))
    tile.soc.p2p_log.append(("load", tile.sim.now, source, tile.coord, chunk_id))
    ok = yield ev
    tile.stall_reason = None
    return ok
