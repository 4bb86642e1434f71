"""Tile sockets: memory, accelerator wrapper, processor and auxiliary tiles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import p2p
from .errors import ConfigError
from .noc import Coord, MsgType, Packet
from .p2p import P2pConfig, P2pSendState

MAX_SEGMENTS = 4


class Reg(IntEnum):
    CMD = 0
    STATUS = 1
    CONF_SIZE = 2
    SRC_OFFSET = 3          # input segment 0
    DST_OFFSET = 4
    LOCATION = 5
    P2P = 6
    TLB_BASE = 7
    TLB_BOUND = 8
    # kernel-specific job registers
    FRAME_FIRST = 9
    FRAME_STEP = 10
    N_IN_SEGS = 11
    IN_WORDS_0 = 12
    IN_WORDS_1 = 13
    IN_WORDS_2 = 14
    IN_WORDS_3 = 15
    SRC_OFFSET_1 = 16
    SRC_OFFSET_2 = 17
    SRC_OFFSET_3 = 18
    IN_SLOTS_0 = 19
    IN_SLOTS_1 = 20
    IN_SLOTS_2 = 21
    IN_SLOTS_3 = 22
    IN_P2P_MASK = 23        # bit i: segment i is loaded p2p
    IN_GROUPS = 24          # 4 bits per segment: which P2P_REG sources feed it
    OUT_WORDS = 25
    DST_SLOTS = 26
    STORE_DMA = 27
    P2P_READERS = 28


IN_WORDS = [Reg.IN_WORDS_0, Reg.IN_WORDS_1, Reg.IN_WORDS_2, Reg.IN_WORDS_3]
IN_OFFSET = [Reg.SRC_OFFSET, Reg.SRC_OFFSET_1, Reg.SRC_OFFSET_2, Reg.SRC_OFFSET_3]
IN_SLOTS = [Reg.IN_SLOTS_0, Reg.IN_SLOTS_1, Reg.IN_SLOTS_2, Reg.IN_SLOTS_3]

READ_ONLY = {Reg.LOCATION, Reg.STATUS}


class Status(IntEnum):
    IDLE = 0
    RUNNING = 1
    DONE = 2
    ERROR = 3


WRITE_ERROR_BIT = 1 << 8


def pack_coord(c) -> int:
    return c[0] | c[1] << 16


def unpack_coord(v: int) -> Coord:
    return Coord(v & 0xFFFF, (v >> 16) & 0xFFFF)


class RegisterFile:
    def __init__(self, coord: Coord):
        self.coord = Coord(*coord)
        self.values = {r: 0 for r in Reg}
        self.values[Reg.LOCATION] = pack_coord(self.coord)
        self.status = Status.IDLE
        self.write_error = False

    def read(self, reg: int) -> int:
        reg = Reg(reg)
        if reg == Reg.STATUS:
            return int(self.status) | (WRITE_ERROR_BIT if self.write_error else 0)
        if reg == Reg.LOCATION:
            return pack_coord(self.coord)
        return self.values[reg]

    def __getitem__(self, reg) -> int:
        return self.read(reg)

    def write(self, reg: int, value: int) -> bool:
        """Apply a write from the control plane; False if rejected.

        Everything but CMD is writable only while idle; CMD is accepted when
        idle (start) or when finished (clear back to idle).
        """
        reg = Reg(reg)
        if reg in READ_ONLY:
            self.write_error = True
            return False
        if reg == Reg.CMD:
            if self.status == Status.RUNNING:
                self.write_error = True
                return False
            self.values[reg] = value
            return True
        if self.status != Status.IDLE:
            self.write_error = True
            return False
        self.values[reg] = int(value)
        return True

    def set_p2p(self, cfg: P2pConfig):
        self.values[Reg.P2P] = cfg.pack()

    @property
    def p2p(self) -> P2pConfig:
        return P2pConfig.unpack(self.values[Reg.P2P])


@dataclass
class Tlb:
    base: int = 0
    bound: int = 0

    def translate(self, offset: int, size: int) -> int:
        if offset < 0 or size < 0 or offset + size > self.bound:
            raise IndexError(f"access [{offset}, {offset + size}) outside TLB bound {self.bound}")
        return self.base + offset


@dataclass
class LocalMemory:
    in_size: int
    out_size: int
    in_buf: np.ndarray = field(init=False)
    out_buf: np.ndarray = field(init=False)

    def __post_init__(self):
        self.in_buf = np.zeros(self.in_size, dtype=np.uint64)
        self.out_buf = np.zeros(self.out_size, dtype=np.uint64)


class Tile:
    kind = "auxiliary"

    def __init__(self, soc, coord: Coord, name: str = ""):
        self.soc = soc
        self.coord = Coord(*coord)
        self.name = name or f"{self.kind}{tuple(self.coord)}"

    @property
    def sim(self):
        return self.soc.sim

    def send(self, pkt: Packet):
        self.soc.send(self, pkt)

    def receive(self, pkt: Packet):
        raise ConfigError(f"{self.kind} tile {self.coord} cannot accept {pkt.msg_type.value}")

    def diagnose(self) -> list[str]:
        return []


class AuxiliaryTile(Tile):
    kind = "auxiliary"

    def receive(self, pkt):
        pass


class MemoryTile(Tile):
    """DRAM behind one memory controller: fixed latency plus a word-per-cycle
    bandwidth limit, requests served in arrival order."""
    kind = "memory"

    def __init__(self, soc, coord, name="", words=1 << 22, latency=100, bandwidth=1):
        super().__init__(soc, coord, name)
        if bandwidth <= 0 or latency < 0 or words <= 0:
            raise ConfigError("DRAM needs positive size and bandwidth, non-negative latency")
        self.dram = np.zeros(words, dtype=np.uint64)
        self.latency = latency
        self.bandwidth = bandwidth
        self.busy_until = 0
        self.dram_read_words = 0
        self.dram_write_words = 0
        self.service_log: list[tuple] = []     # (kind, addr, size, start, done)

    @property
    def words(self):
        return len(self.dram)

    def _transfer(self, size):
        return math.ceil(size / self.bandwidth)

    def _in_bounds(self, addr, size):
        return 0 <= addr and size >= 0 and addr + size <= len(self.dram)

    # host-side access, not counted: the runtime initializing and reading buffers
    def host_write(self, addr, data):
        data = np.asarray(data, dtype=np.uint64)
        self.dram[addr:addr + len(data)] = data

    def host_read(self, addr, size):
        return self.dram[addr:addr + size].copy()

    def receive(self, pkt: Packet):
        now = self.sim.now
        if pkt.msg_type == MsgType.DMA_LOAD_REQ:
            self._load(pkt, now)
        elif pkt.msg_type == MsgType.DMA_STORE:
            self._store(pkt, now)
        else:
            super().receive(pkt)

    def _load(self, req, now):
        addr, size = req.address, req.size
        if not self._in_bounds(addr, size):
            self.sim.schedule(1, self.send, Packet(self.coord, req.src, MsgType.DMA_LOAD_RSP,
                                                   address=addr, error=True))
            return
        start = max(now, self.busy_until)
        self.busy_until = start + self._transfer(size)
        done = start + self.latency + self._transfer(size)
        self.service_log.append(("load", addr, size, start, done))
        self.dram_read_words += size
        data = self.dram[addr:addr + size].copy()
        maxw = self.soc.noc_cfg.max_packet_words
        # data streams out packet by packet as the controller produces it
        for off in range(0, size, maxw):
            n = min(maxw, size - off)
            ready = start + self.latency + self._transfer(off + n)
            rsp = Packet(self.coord, req.src, MsgType.DMA_LOAD_RSP,
                         payload=data[off:off + n], address=addr + off, size=n)
            self.sim.schedule(ready - now, self.send, rsp)

    def _store(self, pkt, now):
        addr, size = pkt.address, pkt.length
        if not self._in_bounds(addr, size):
            self.sim.schedule(1, self.send, Packet(self.coord, pkt.src, MsgType.DMA_STORE_ACK,
                                                   address=addr, error=True))
            return
        start = max(now, self.busy_until)
        self.busy_until = start + self._transfer(size)
        done = start + self.latency + self._transfer(size)
        self.service_log.append(("store", addr, size, start, done))
        self.dram[addr:addr + size] = pkt.payload
        self.dram_write_words += size
        ack = Packet(self.coord, pkt.src, MsgType.DMA_STORE_ACK, address=addr, size=size)
        self.sim.schedule(done - now, self.send, ack)


class AcceleratorTile(Tile):
    """The accelerator socket: registers, TLB, DMA engine, private local
    memory and the chunked LOAD / COMPUTE / STORE loop around the kernel."""
    kind = "accelerator"

    def __init__(self, soc, coord, name, kernel, accel_kind, in_buf_size=None,
                 out_buf_size=None):
        super().__init__(soc, coord, name)
        self.kernel = kernel
        self.accel_kind = accel_kind
        self.regs = RegisterFile(coord)
        self.tlb = Tlb()
        self.mem = LocalMemory(in_buf_size or kernel.in_words, out_buf_size or kernel.out_words)
        if self.mem.in_size < kernel.in_words or self.mem.out_size < kernel.out_words:
            raise ConfigError(f"{name}: local buffers smaller than one kernel frame")
        self.p2p = P2pSendState()
        self.owner: Coord | None = None
        self._rx = None
        self._acks_left = 0
        self._acks_ev = None
        self._ack_error = False
        self.in_used = 0
        self.max_in_used = 0
        self.stall_reason = None
        self.busy_cycles = 0
        self.running_cycles = 0
        self.invocations = 0
        self.interrupts_sent = 0
        self.dma_log: list[tuple] = []       # (kind, virtual offset, size, cycle)

    @property
    def status(self) -> Status:
        return self.regs.status

    # -- register access ---------------------------------------------------
    def register_access(self, pkt: Packet):
        if pkt.msg_type == MsgType.CONFIG_READ:
            return Packet(self.coord, pkt.src, MsgType.CONFIG_READ_RSP, reg=pkt.reg,
                          value=self.regs.read(pkt.reg))
        if pkt.msg_type != MsgType.CONFIG_WRITE:
            raise ConfigError(f"not a register access: {pkt.msg_type.value}")
        reg, value = Reg(pkt.reg), pkt.value
        if reg == Reg.P2P and self.status == Status.IDLE:
            try:
                P2pConfig.unpack(value).check(self.soc.accelerator_coords)
            except ConfigError:
                self.regs.write_error = True
                self.regs.status = Status.ERROR
                return None
        if not self.regs.write(reg, value):
            return None
        if reg == Reg.TLB_BASE:
            self.tlb.base = value
        elif reg == Reg.TLB_BOUND:
            self.tlb.bound = value
        elif reg == Reg.CMD:
            if value == 1 and self.status == Status.IDLE:
                self.owner = pkt.src
                self.regs.status = Status.RUNNING
                self.sim.process(self.run_loop(), f"{self.name}.run")
            elif value == 0:
                self.regs.status = Status.IDLE
                self.regs.write_error = False
        return None

    def receive(self, pkt: Packet):
        m = pkt.msg_type
        if m in (MsgType.CONFIG_WRITE, MsgType.CONFIG_READ):
            rsp = self.register_access(pkt)
            if rsp is not None:
                self.send(rsp)
        elif m in (MsgType.DMA_LOAD_RSP, MsgType.P2P_LOAD_RSP):
            self._on_data(pkt)
        elif m == MsgType.DMA_STORE_ACK:
            self._ack_error |= pkt.error
            self._acks_left -= 1
            if self._acks_left == 0:
                self._acks_ev.succeed(not self._ack_error)
        elif m == MsgType.P2P_LOAD_REQ:
            p2p.on_request(self, pkt)
        else:
            super().receive(pkt)

    # -- data movement -----------------------------------------------------
    def reserve_in_buf(self, size):
        free = self.mem.in_size - self.in_used
        assert size <= free, f"{self.name}: load of {size} words with {free} free"
        self.in_used += size
        self.max_in_used = max(self.max_in_used, self.in_used)

    def expect_data(self, msg_type, buf_offset, size, source=None, chunk_id=-1, address=0):
        assert self._rx is None, "single outstanding load"
        ev = self.sim.event(f"{self.name}.rx")
        self._rx = dict(msg=msg_type, buf=buf_offset, size=size, got=0, ev=ev,
                        source=source, chunk=chunk_id, address=address)
        if size == 0:
            self._rx = None
            ev.succeed(True)
        return ev

    def _on_data(self, pkt: Packet):
        rx = self._rx
        if rx is None or pkt.msg_type != rx["msg"]:
            self.fault(f"unexpected {pkt.msg_type.value} from {pkt.src}")
            return
        if pkt.error:
            self._rx = None
            rx["ev"].succeed(False)
            return
        if pkt.msg_type == MsgType.P2P_LOAD_RSP:
            if pkt.src != rx["source"] or pkt.chunk_id != rx["chunk"]:
                self.fault(f"p2p chunk {pkt.chunk_id} from {pkt.src}, expected "
                           f"{rx['chunk']} from {rx['source']}")
                return
            off = pkt.address
        else:
            off = pkt.address - rx["address"]
        n = pkt.length
        self.mem.in_buf[rx["buf"] + off:rx["buf"] + off + n] = pkt.payload
        rx["got"] += n
        if rx["got"] >= rx["size"]:
            self._rx = None
            rx["ev"].succeed(True)

    def fault(self, why: str):
        raise RuntimeError(f"{self.name} {self.coord}: {why}")

    def dma_load(self, offset, size, buf_offset):
        self.reserve_in_buf(size)
        try:
            addr = self.tlb.translate(offset, size)
        except IndexError:
            return False
        self.dma_log.append(("load", offset, size, self.sim.now))
        ev = self.expect_data(MsgType.DMA_LOAD_RSP, buf_offset, size, address=addr)
        self.send(Packet(self.coord, self.soc.memory.coord, MsgType.DMA_LOAD_REQ,
                         address=addr, size=size))
        self.stall_reason = f"dma load of {size} words"
        ok = yield ev
        self.stall_reason = None
        return ok

    def dma_store(self, offset, data):
        size = len(data)
        try:
            addr = self.tlb.translate(offset, size)
        except IndexError:
            return False
        self.dma_log.append(("store", offset, size, self.sim.now))
        maxw = self.soc.noc_cfg.max_packet_words
        parts = range(0, size, maxw)
        self._acks_left = len(parts)
        self._ack_error = False
        self._acks_ev = ev = self.sim.event(f"{self.name}.acks")
        for off in parts:
            self.send(Packet(self.coord, self.soc.memory.coord, MsgType.DMA_STORE,
                             payload=data[off:off + maxw], address=addr + off))
        if not parts:
            return True
        self.stall_reason = f"dma store of {size} words"
        ok = yield ev
        self.stall_reason = None
        return ok

    # -- the wrapper's top-level loop ---------------------------------------
    def segments(self):
        """Input segments of one chunk: (words, p2p?, virtual offset, slots, sources)."""
        r = self.regs
        cfg = r.p2p
        n = r[Reg.N_IN_SEGS] or 1
        segs = []
        for i in range(n):
            is_p2p = bool(r[Reg.IN_P2P_MASK] >> i & 1) and cfg.load_enabled
            group = (r[Reg.IN_GROUPS] >> (4 * i)) & 0xF
            sources = [cfg.sources[k] for k in range(cfg.n_sources) if group >> k & 1]
            if is_p2p and not sources:
                sources = list(cfg.sources)
            segs.append((r[IN_WORDS[i]] or self.kernel.in_words, is_p2p, r[IN_OFFSET[i]],
                         r[IN_SLOTS[i]] or 1 << 40, sources))
        return segs

    def run_loop(self):
        r = self.regs
        start = self.sim.now
        self.invocations += 1
        segs = self.segments()
        in_chunk = sum(s[0] for s in segs)
        conf = r[Reg.CONF_SIZE]
        ok = conf > 0 and in_chunk == self.kernel.in_words and len(segs) <= MAX_SEGMENTS
        n_chunks = math.ceil(conf / in_chunk) if ok else 0
        out_words = r[Reg.OUT_WORDS] or self.kernel.out_words
        out_slots = r[Reg.DST_SLOTS] or 1 << 40
        cfg = r.p2p
        first, step = r[Reg.FRAME_FIRST], r[Reg.FRAME_STEP] or 1
        for i in range(n_chunks):
            frame = first + i * step
            # LOAD: in_buf is free again once the previous chunk was computed
            self.in_used = 0
            self.mem.in_buf[:] = 0
            remaining = min(in_chunk, conf - i * in_chunk)
            buf = 0
            for words, is_p2p, offset, slots, sources in segs:
                size = min(words, remaining - buf) if remaining > buf else 0
                if size == 0:
                    break
                if is_p2p:
                    src = sources[frame % len(sources)]
                    ok = yield from p2p.p2p_load(self, src, frame, size, buf)
                else:
                    ok = yield from self.dma_load(offset + (frame % slots) * words, size, buf)
                if not ok:
                    break
                buf += words
            if not ok:
                break
            # COMPUTE
            out = self.kernel(self.mem.in_buf[:self.kernel.in_words])
            self.mem.out_buf[:len(out)] = out
            cycles = self.kernel.cycles()
            self.busy_cycles += cycles
            if cycles:
                yield cycles
            # STORE
            if r[Reg.STORE_DMA]:
                ok = yield from self.dma_store(r[Reg.DST_OFFSET] + (frame % out_slots) * out_words,
                                               self.mem.out_buf[:out_words])
                if not ok:
                    break
            if cfg.store_enabled:
                yield from p2p.p2p_store(self, frame, self.mem.out_buf[:out_words],
                                         max(1, r[Reg.P2P_READERS]))
        self.running_cycles += self.sim.now - start
        self.regs.status = Status.DONE if ok else Status.ERROR
        self.interrupts_sent += 1
        self.send(Packet(self.coord, self.owner, MsgType.INTERRUPT, value=int(self.regs.status),
                         error=not ok))

    def diagnose(self):
        out = []
        if self.stall_reason:
            out.append(f"{self.name} {self.coord}: {self.stall_reason}")
        for req in self.p2p.pending:
            out.append(f"{self.name} {self.coord}: holds unanswered p2p request for chunk "
                       f"{req.chunk_id} from {req.requester}")
        return out


class ProcessorTile(Tile):
    """Endpoint of the runtime: sends register accesses, collects interrupts.
    Software on it takes zero simulated time."""
    kind = "processor"

    def __init__(self, soc, coord, name=""):
        super().__init__(soc, coord, name)
        self._irq: dict[Coord, list] = {}
        self._reads: dict[tuple, list] = {}
        self.interrupts: list[tuple] = []

    def config_write(self, dst, reg, value):
        self.send(Packet(self.coord, dst, MsgType.CONFIG_WRITE, reg=int(reg), value=int(value)))

    def config_read(self, dst, reg):
        ev = self.sim.event(f"read{tuple(dst)}[{reg}]")
        self._reads.setdefault((Coord(*dst), int(reg)), []).append(ev)
        self.send(Packet(self.coord, dst, MsgType.CONFIG_READ, reg=int(reg)))
        return ev

    def interrupt(self, src) -> "object":
        ev = self.sim.event(f"irq{tuple(src)}")
        self._irq.setdefault(Coord(*src), []).append(ev)
        return ev

    def receive(self, pkt: Packet):
        if pkt.msg_type == MsgType.INTERRUPT:
            self.interrupts.append((self.sim.now, pkt.src, pkt.error))
            waiting = self._irq.get(pkt.src)
            if waiting:
                waiting.pop(0).succeed(pkt)
        elif pkt.msg_type == MsgType.CONFIG_READ_RSP:
            waiting = self._reads.get((pkt.src, pkt.reg))
            if waiting:
                waiting.pop(0).succeed(pkt.value)
        else:
            super().receive(pkt)
