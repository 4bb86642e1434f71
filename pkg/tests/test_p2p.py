import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from espsim import build_soc
from espsim.errors import ConfigError, DeadlockError
from espsim.noc import Coord, MsgType, Plane
from espsim.p2p import MAX_SOURCES, P2pConfig, p2p_configure
from espsim.runtime import DataflowGraph, Edge, Node, Runtime
from espsim.tiles import Reg
from espsim.workloads import chain, floorplan

from conftest import identity

FRAMES = 8


def run(socd, graph, mode, frames=FRAMES, seed=0):
    soc = build_soc(socd)
    rt = Runtime(soc)
    report = rt.run(rt.validate(graph), frames, mode, seed=seed)
    return soc, rt, report


# -- P2pConfig -----------------------------------------------------------------
def test_five_sources_rejected():
    cfg = P2pConfig(False, True, tuple(Coord(i, 0) for i in range(5)))
    with pytest.raises(ConfigError):
        cfg.check()
    with pytest.raises(ConfigError):
        cfg.pack()


def test_load_without_sources_rejected():
    with pytest.raises(ConfigError):
        P2pConfig(False, True, ()).check()


@given(st.booleans(), st.booleans(),
       st.lists(st.tuples(st.integers(0, 63), st.integers(0, 63)), min_size=0,
                max_size=MAX_SOURCES))
def test_register_pack_roundtrip(store, load, sources):
    cfg = P2pConfig(store, load and bool(sources), tuple(Coord(*s) for s in sources))
    assert P2pConfig.unpack(cfg.pack()) == cfg


def test_configure_rejects_non_accelerator_source():
    soc = build_soc(floorplan([identity("a", 4), identity("b", 4)], 2, 2))
    b = soc.accelerators["b"]
    with pytest.raises(ConfigError):
        p2p_configure(b, P2pConfig(False, True, (soc.memory.coord,)))
    p2p_configure(b, P2pConfig(False, True, (soc.accelerators["a"].coord,)))
    assert b.regs.p2p.sources == (soc.accelerators["a"].coord,)


def test_configure_requires_idle():
    soc = build_soc(floorplan([identity("a", 4, cycles=10_000), identity("b", 4)], 2, 2))
    a = soc.accelerators["a"]
    c, w = a.coord, soc.processor.config_write
    for reg, v in ((Reg.TLB_BOUND, 64), (Reg.OUT_WORDS, 4), (Reg.CONF_SIZE, 4)):
        w(c, reg, v)
    w(c, Reg.CMD, 1)
    soc.sim.run(lambda: a.invocations == 1)
    with pytest.raises(ConfigError):
        p2p_configure(a, P2pConfig(True, False, ()))


def test_bad_p2p_register_write_sets_error():
    soc = build_soc(floorplan([identity("a", 4), identity("b", 4)], 2, 2))
    b = soc.accelerators["b"]
    bad = P2pConfig(False, True, (soc.processor.coord,)).pack()
    soc.processor.config_write(b.coord, Reg.P2P, bad)
    soc.sim.run()
    assert b.regs.write_error


# -- transfers ------------------------------------------------------------------
def test_disabled_config_behaves_like_dma():
    socd, g = chain(2, 50, words=64, mode="DMA")
    _, _, pipe = run(socd, g, "pipe")
    _, _, p2p = run(socd, g, "p2p")
    assert (pipe.total_cycles, pipe.trace_digest, pipe.dram_words) == \
        (p2p.total_cycles, p2p.trace_digest, p2p.dram_words)


def test_chain_p2p_removes_intermediate_traffic():
    words = 1024
    socd, g = chain(2, 50, words=words, mode="P2P")
    _, _, dma = run(socd, g, "pipe")
    soc, rt, p2p = run(socd, g, "p2p")
    assert dma.dram_words - p2p.dram_words == 2 * words * FRAMES
    assert p2p.dram_read_words == words * FRAMES       # primary input only
    assert p2p.dram_write_words == words * FRAMES      # final output only
    assert p2p.output_digest == dma.output_digest
    cfg = rt.validate(g)
    assert cfg.p2p_config("s0") == P2pConfig(True, False, ())
    assert cfg.p2p_config("s1") == P2pConfig(False, True, (soc.accelerators["s0"].coord,))


def test_single_source_in_buf_equals_staged_out_buf():
    socd, g = chain(2, 10, words=1024, mode="P2P")
    soc, _, _ = run(socd, g, "p2p", frames=1)
    a, b = soc.accelerators["s0"], soc.accelerators["s1"]
    assert np.array_equal(b.mem.in_buf, a.mem.out_buf)
    assert soc.memory.dram_read_words == 1024


def two_source_setup():
    accels = [identity("img", 1024),
              {"name": "hist", "accel_kind": "scramble",
               "accel_params": {"in_words": 1024, "out_words": 256, "salt": 3}},
              identity("join", 1280)]
    g = DataflowGraph([Node("img", "identity"), Node("hist", "scramble"),
                       Node("join", "identity")],
                      [Edge("img", "join", "P2P"), Edge("hist", "join", "P2P")],
                      {"input": {"generator": "random_words"}})
    return floorplan(accels, 2, 3), g


def test_two_sources_concatenate_in_order():
    socd, g = two_source_setup()
    soc, rt, _ = run(socd, g, "p2p", frames=1)
    img, hist, join = (soc.accelerators[n] for n in ("img", "hist", "join"))
    assert np.array_equal(join.mem.in_buf[:1024], img.mem.out_buf[:1024])
    assert np.array_equal(join.mem.in_buf[1024:1280], hist.mem.out_buf[:256])
    sources = rt.validate(g).p2p_config("join").sources
    assert sources == (img.coord, hist.coord)
    # requests go out in ascending source order
    loads = [(s, ch) for kind, _, s, r, ch in soc.p2p_log if kind == "load" and r == join.coord]
    assert loads == [(img.coord, 0), (hist.coord, 0)]


def _req_and_rsp(soc):
    reqs, rsps = {}, []
    for pid, msg, src, dst, chunk, length, inj, dlv in soc.packet_log:
        if msg == MsgType.P2P_LOAD_REQ.value:
            reqs[(dst, src, chunk)] = dlv          # (sender, requester, chunk) -> arrival
        elif msg == MsgType.P2P_LOAD_RSP.value:
            rsps.append(((src, dst, chunk), inj))
    return reqs, rsps


def test_responses_strictly_follow_requests():
    socd, g = chain(3, [10, 300, 40], words=300, mode="P2P")
    soc, _, _ = run(socd, g, "p2p", frames=16)
    reqs, rsps = _req_and_rsp(soc)
    assert len(rsps) >= 2 * 16
    for key, inj in rsps:
        assert key in reqs and inj > reqs[key]
    for acc in soc.accelerators.values():
        chunks = [c for c, *_ in acc.p2p.served]
        assert chunks == sorted(chunks)
        assert all(send >= arr for _, _, arr, send in acc.p2p.served)


def test_requests_only_with_free_buffer():
    socd, g = chain(3, [10, 300, 40], words=300, mode="P2P")
    soc, _, _ = run(socd, g, "p2p", frames=16)
    arrivals = {}
    for pid, msg, src, dst, chunk, length, inj, dlv in soc.packet_log:
        if msg == MsgType.P2P_LOAD_RSP.value:
            arrivals[(dst, chunk)] = max(arrivals.get((dst, chunk), 0), dlv)
    for acc in soc.accelerators.values():
        assert acc.max_in_used <= acc.mem.in_size
        mine = [(cyc, ch) for kind, cyc, s, r, ch in soc.p2p_log
                if kind == "load" and r == acc.coord]
        # a new request only after the previous chunk fully landed
        for (c0, ch0), (c1, _) in zip(mine, mine[1:]):
            assert c1 >= arrivals[(acc.coord, ch0)]


def test_stalled_sender_puts_nothing_on_links():
    socd, g = chain(2, [10, 10], words=512, mode="P2P")
    g.nodes[1].params["start_delay"] = 20_000
    soc = build_soc(socd)
    rt = Runtime(soc)
    plan = rt.validate(g)
    a = soc.accelerators["s0"]
    samples = []

    def monitor():
        while soc.sim.now < 19_000:
            samples.append((a.p2p.staged is not None,
                            soc.mesh.flits_of(MsgType.P2P_LOAD_RSP),
                            soc.mesh.flits_of(MsgType.P2P_LOAD_REQ)))
            yield 500

    soc.sim.process(monitor(), "monitor")
    rt.run(plan, 4, "p2p")
    stalled = [s for s in samples if s[0]]
    assert len(stalled) > 30
    assert all(rsp == 0 and req == 0 for _, rsp, req in stalled)
    assert soc.mesh.flits_of(MsgType.P2P_LOAD_RSP) > 0


def test_sender_busy_fraction_matches_rate():
    c = 20_000
    socd, g = chain(2, [c, 2 * c], words=64, mode="P2P")
    soc, _, rep = run(socd, g, "p2p", frames=32)
    frac = soc.accelerators["s0"].busy_cycles / rep.total_cycles
    assert abs(frac - 0.5) <= 0.05


def test_p2p_uses_only_dma_planes():
    socd, g = two_source_setup()
    soc_dma, _, _ = run(socd, g, "pipe", frames=2)
    soc_p2p, _, _ = run(socd, g, "p2p", frames=2)
    inventory = lambda s: [len(q) for q in s.mesh.queues]     # noqa: E731
    assert inventory(soc_dma) == inventory(soc_p2p) == [5 * 6] * len(Plane)
    planes = {k.rsplit("/", 1)[1] for k in soc_p2p.mesh.per_link_flits()}
    assert planes <= {p.name for p in Plane}
    for (s, d, m), n in soc_p2p.mesh.flow_flits.items():
        if m in (MsgType.P2P_LOAD_REQ, MsgType.P2P_LOAD_RSP):
            assert m.plane in (Plane.DMA_REQ, Plane.DMA_RSP)


def test_missing_producer_deadlock_names_both_tiles():
    soc = build_soc(floorplan([identity("a", 16), identity("b", 16)], 2, 2))
    a, b = soc.accelerators["a"], soc.accelerators["b"]
    w = soc.processor.config_write
    p2p_configure(b, P2pConfig(False, True, (a.coord,)))
    for reg, v in ((Reg.TLB_BOUND, 1024), (Reg.IN_P2P_MASK, 1), (Reg.OUT_WORDS, 16),
                   (Reg.STORE_DMA, 1), (Reg.CONF_SIZE, 16)):
        w(b.coord, reg, v)
    irq = soc.processor.interrupt(b.coord)
    w(b.coord, Reg.CMD, 1)
    with pytest.raises(DeadlockError) as exc:
        soc.sim.run(irq)
    text = "\n".join(exc.value.waiting)
    assert str(a.coord) in text and str(b.coord) in text
