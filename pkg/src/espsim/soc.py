"""SoC floorplan, assembly of tiles around the mesh, and the cycle loop glue."""
from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .accel import make_kernel
from .errors import ConfigError
from .noc import Coord, Mesh, NocConfig, Packet, Plane
from .sim import Sim
from .tiles import (AcceleratorTile, AuxiliaryTile, MemoryTile, ProcessorTile, Reg, Tile,
                    unpack_coord)

TILE_KINDS = ("processor", "memory", "accelerator", "auxiliary")


@dataclass
class TileDescriptor:
    coord: Coord
    kind: str
    name: str = ""
    accel_kind: str | None = None
    accel_params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coord = Coord(*self.coord)


@dataclass
class SocConfig:
    mesh_rows: int
    mesh_cols: int
    tiles: list[TileDescriptor]
    queue_depth: int = 4
    router_latency: int = 1
    flit_bits: int = 64
    max_packet_words: int = 256
    dram_latency: int = 100
    dram_bandwidth: int = 1
    dram_words: int = 1 << 22
    clock_mhz: float = 78.0
    watchdog_cycles: int = 10_000_000
    source: str = "<config>"
    base_dir: str | None = None

    @classmethod
    def from_dict(cls, d: dict, source="<config>", base_dir=None) -> "SocConfig":
        d = dict(d)
        tiles = []
        for i, t in enumerate(d.pop("tiles", [])):
            where = f"{source}: tiles[{i}]"
            try:
                coord = t["coord"]
                kind = t["kind"]
            except (KeyError, TypeError) as e:
                raise ConfigError(f"{where}: missing field {e}") from None
            tiles.append(TileDescriptor(coord, kind, t.get("name", ""), t.get("accel_kind"),
                                        dict(t.get("accel_params", {}))))
        known = {f for f in cls.__dataclass_fields__} - {"tiles", "source", "base_dir"}
        unknown = set(d) - known - {"name", "description"}
        if unknown:
            raise ConfigError(f"{source}: unknown SoC fields {sorted(unknown)}")
        cfg = cls(tiles=tiles, source=source, base_dir=base_dir,
                  **{k: v for k, v in d.items() if k in known})
        cfg.check()
        return cfg

    @classmethod
    def from_file(cls, path) -> "SocConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}:{e.lineno}: {e.msg}") from None
        return cls.from_dict(d, source=str(path), base_dir=str(path.parent))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("source")
        d.pop("base_dir")
        for t in d["tiles"]:
            t["coord"] = list(t["coord"])
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def noc(self) -> NocConfig:
        return NocConfig(self.mesh_rows, self.mesh_cols, self.queue_depth, self.router_latency,
                         self.flit_bits, self.max_packet_words)

    def check(self):
        noc = self.noc
        seen: dict[Coord, int] = {}
        names: dict[str, int] = {}
        counts = dict.fromkeys(TILE_KINDS, 0)
        for i, t in enumerate(self.tiles):
            where = f"{self.source}: tiles[{i}]"
            if t.kind not in TILE_KINDS:
                raise ConfigError(f"{where}: unknown tile kind {t.kind!r}")
            try:
                noc.check(t.coord)
            except ConfigError as e:
                raise ConfigError(f"{where}: {e}") from None
            if t.coord in seen:
                raise ConfigError(f"{where}: duplicate coordinate {tuple(t.coord)} "
                                  f"(also tiles[{seen[t.coord]}])")
            seen[t.coord] = i
            counts[t.kind] += 1
            if t.kind == "accelerator":
                if not t.accel_kind:
                    raise ConfigError(f"{where}: accelerator tile without accel_kind")
                if not t.name:
                    raise ConfigError(f"{where}: accelerator tile needs a device name")
            if t.name:
                if t.name in names:
                    raise ConfigError(f"{where}: duplicate device name {t.name!r}")
                names[t.name] = i
        if counts["processor"] < 1:
            raise ConfigError(f"{self.source}: at least one processor tile is required")
        if counts["memory"] > 1:
            raise ConfigError(f"{self.source}: exactly one memory tile is supported, "
                              f"got {counts['memory']}")
        if counts["memory"] == 0 and counts["accelerator"] > 0:
            raise ConfigError(f"{self.source}: accelerators need a memory tile")
        if self.dram_bandwidth <= 0 or self.dram_latency < 0:
            raise ConfigError(f"{self.source}: bad DRAM timing")


class Soc:
    def __init__(self, cfg: SocConfig, trace_flits: bool = False):
        self.cfg = cfg
        self.noc_cfg = cfg.noc
        self.sim = Sim(cfg.watchdog_cycles)
        self.mesh = Mesh(self.noc_cfg, trace_flits=trace_flits)
        self.tiles: dict[Coord, Tile] = {}
        self.memory: MemoryTile | None = None
        self.processors: list[ProcessorTile] = []
        self.accelerators: dict[str, AcceleratorTile] = {}
        self._outbox: dict[Coord, list[deque]] = {}
        self._pending: set[Coord] = set()
        self.packet_log: list[tuple] = []
        self.p2p_log: list[tuple] = []
        for t in cfg.tiles:
            self.tiles[t.coord] = self._make_tile(t)
        for y in range(cfg.mesh_rows):
            for x in range(cfg.mesh_cols):
                c = Coord(x, y)
                if c not in self.tiles:
                    self.tiles[c] = AuxiliaryTile(self, c)
        self.accelerator_coords = frozenset(a.coord for a in self.accelerators.values())
        self.sim.fabric = self._fabric
        self.sim.diagnose = self.diagnose
        self.registry = None

    def _make_tile(self, t: TileDescriptor) -> Tile:
        if t.kind == "memory":
            self.memory = MemoryTile(self, t.coord, t.name, self.cfg.dram_words,
                                     self.cfg.dram_latency, self.cfg.dram_bandwidth)
            return self.memory
        if t.kind == "processor":
            p = ProcessorTile(self, t.coord, t.name)
            self.processors.append(p)
            return p
        if t.kind == "accelerator":
            params = dict(t.accel_params)
            in_buf = params.pop("in_buf_size", None)
            out_buf = params.pop("out_buf_size", None)
            try:
                kernel = make_kernel(t.accel_kind, params, base_dir=self.cfg.base_dir)
            except (ValueError, OSError) as e:
                raise ConfigError(f"{self.cfg.source}: tile {t.name!r}: {e}") from None
            a = AcceleratorTile(self, t.coord, t.name, kernel, t.accel_kind, in_buf, out_buf)
            self.accelerators[t.name] = a
            return a
        return AuxiliaryTile(self, t.coord, t.name)

    @property
    def processor(self) -> ProcessorTile:
        return self.processors[0]

    # -- network interface ---------------------------------------------------
    def send(self, tile: Tile, pkt: Packet):
        box = self._outbox.get(tile.coord)
        if box is None:
            box = self._outbox[tile.coord] = [deque() for _ in Plane]
        box[pkt.plane].append(pkt)
        self._pending.add(tile.coord)

    def _fabric(self, cycle: int) -> bool:
        mesh = self.mesh
        if self._pending:
            for c in sorted(self._pending):
                box = self._outbox[c]
                for q in box:
                    if q and mesh.inject(q[0], c, cycle):
                        q.popleft()
                if not any(box):
                    self._pending.discard(c)
        if not mesh.busy:
            return bool(self._pending)
        delivered = mesh.step(cycle)
        if delivered:
            self.sim.progress()
            log = self.packet_log
            for pkt, at in delivered:
                log.append((pkt.pid, pkt.msg_type.value, tuple(pkt.src), tuple(pkt.dst),
                            pkt.chunk_id, pkt.length, pkt.inject_cycle, pkt.deliver_cycle))
                self.tiles[at].receive(pkt)
        return mesh.busy or bool(self._pending)

    def diagnose(self) -> list[str]:
        lines = []
        for c in sorted(self.tiles):
            lines.extend(self.tiles[c].diagnose())
        return lines

    # -- boot ------------------------------------------------------------------
    def boot(self):
        """Probe LOCATION_REG of every accelerator and build the device registry."""
        from .runtime import DeviceRegistry
        proc = self.processor
        found = {}

        def probe():
            for name in sorted(self.accelerators):
                tile = self.accelerators[name]
                value = yield proc.config_read(tile.coord, Reg.LOCATION)
                found[name] = (unpack_coord(value), tile.accel_kind)

        done = self.sim.process(probe(), "boot").finished
        self.sim.run(done)
        self.registry = DeviceRegistry(found)
        return self.registry

    @property
    def dram_counters(self) -> tuple[int, int]:
        m = self.memory
        return (m.dram_read_words, m.dram_write_words) if m else (0, 0)


def build_soc(config: SocConfig | dict | str | Path, trace_flits: bool = False) -> Soc:
    if isinstance(config, (str, Path)):
        config = SocConfig.from_file(config)
    elif isinstance(config, dict):
        config = SocConfig.from_dict(config)
    soc = Soc(config, trace_flits=trace_flits)
    soc.boot()
    return soc
