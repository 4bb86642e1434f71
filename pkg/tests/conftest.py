import numpy as np
import pytest

from espsim import build_soc
from espsim.tiles import Reg
from espsim.workloads import floorplan


def small_soc(accels, rows=2, cols=2, **kw):
    """Build a SoC with cpu at (0,0), memory at (1,0), accelerators after."""
    return build_soc(floorplan(accels, rows, cols, **kw))


def identity(name, words, cycles=None):
    params = {"words": words}
    if cycles is not None:
        params["cycles"] = cycles
    return {"name": name, "accel_kind": "identity", "accel_params": params}


def drive(soc, gen, name="test"):
    """Run a generator process on the SoC's kernel until it finishes."""
    proc = soc.sim.process(gen, name)
    soc.sim.run(proc.finished)
    return proc.finished.value


def program_dma_job(soc, acc, *, conf_size, in_words, src=0, dst, out_words, slots=0,
                    bound=1 << 20):
    """Plain DMA job on one accelerator; returns the completion interrupt packet."""
    proc = soc.processor
    c = acc.coord

    def job():
        w = proc.config_write
        w(c, Reg.TLB_BASE, 0)
        w(c, Reg.TLB_BOUND, bound)
        w(c, Reg.N_IN_SEGS, 1)
        w(c, Reg.IN_WORDS_0, in_words)
        w(c, Reg.SRC_OFFSET, src)
        w(c, Reg.IN_SLOTS_0, slots)
        w(c, Reg.OUT_WORDS, out_words)
        w(c, Reg.DST_OFFSET, dst)
        w(c, Reg.STORE_DMA, 1)
        w(c, Reg.CONF_SIZE, conf_size)
        irq = proc.interrupt(c)
        w(c, Reg.CMD, 1)
        pkt = yield irq
        w(c, Reg.CMD, 0)
        return pkt

    return drive(soc, job())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary ----------------------------------------------------------
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n} {'PASS' if ok else 'FAIL'}: {title}: {detail}")
