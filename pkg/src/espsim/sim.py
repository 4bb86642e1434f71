"""Single-threaded discrete-event kernel.

Tiles and runtime workers are generator processes. A process yields either an
integer (wait that many cycles) or an :class:`Event` (wait until it fires).
The NoC is advanced cycle by cycle through a fabric hook; when the fabric is
idle the clock jumps to the next scheduled event.
"""
from __future__ import annotations

import heapq
import itertools
from typing import Callable, Generator, Optional

from .errors import DeadlockError


class Event:
    __slots__ = ("sim", "name", "triggered", "value", "_waiters")

    def __init__(self, sim: "Sim", name: str = ""):
        self.sim = sim
        self.name = name
        self.triggered = False
        self.value = None
        self._waiters: list[Process] = []

    def succeed(self, value=None):
        if self.triggered:
            raise RuntimeError(f"event {self.name!r} triggered twice")
        self.triggered = True
        self.value = value
        for w in self._waiters:
            if isinstance(w, Process):
                self.sim._resume(w, value)
            else:
                self.sim.schedule(0, w, self)
        self._waiters.clear()
        return self

    def add_callback(self, fn):
        """Call ``fn(event)`` once the event fires (same cycle if it already has)."""
        if self.triggered:
            self.sim.schedule(0, fn, self)
        else:
            self._waiters.append(fn)

    def __repr__(self):
        return f"<Event {self.name} {'fired' if self.triggered else 'pending'}>"


class Process:
    __slots__ = ("sim", "gen", "name", "finished", "waiting_on")

    def __init__(self, sim: "Sim", gen: Generator, name: str):
        self.sim = sim
        self.gen = gen
        self.name = name
        self.finished = Event(sim, f"{name}.finished")
        self.waiting_on: Optional[Event] = None

    def _step(self, value):
        self.waiting_on = None
        try:
            target = self.gen.send(value)
        except StopIteration as stop:
            self.finished.succeed(stop.value)
            return
        if isinstance(target, Event):
            if target.triggered:
                self.sim._resume(self, target.value)
            else:
                self.waiting_on = target
                target._waiters.append(self)
        elif isinstance(target, int) and target >= 0:
            self.sim.schedule(target, self._step, None)
        else:
            raise TypeError(f"process {self.name} yielded {target!r}")


class Sim:
    def __init__(self, watchdog_cycles: int = 10_000_000):
        self.now = 0
        self.watchdog_cycles = watchdog_cycles
        self._heap: list = []
        self._seq = itertools.count()
        self.processes: list[Process] = []
        self.last_progress = 0
        # fabric hook: called once per simulated cycle, returns True while busy
        self.fabric: Optional[Callable[[int], bool]] = None
        self.diagnose: Callable[[], list[str]] = lambda: []
        self._fabric_cycle = -1

    def event(self, name: str = "") -> Event:
        return Event(self, name)

    def schedule(self, delay: int, fn, arg=None):
        heapq.heappush(self._heap, (self.now + delay, next(self._seq), fn, arg))

    def process(self, gen: Generator, name: str = "proc") -> Process:
        proc = Process(self, gen, name)
        self.processes.append(proc)
        self.schedule(0, proc._step, None)
        return proc

    def all_of(self, events, name="all_of") -> Event:
        events = list(events)
        done = Event(self, name)
        left = [len(events)]

        def one(_ev):
            left[0] -= 1
            if left[0] == 0:
                done.succeed()

        if not events:
            done.succeed()
        for ev in events:
            ev.add_callback(one)
        return done

    def _resume(self, proc: Process, value):
        self.schedule(0, proc._step, value)

    def progress(self):
        self.last_progress = self.now

    def run(self, until: Event | Callable[[], bool] | None = None, max_cycles: int | None = None):
        """Run until ``until`` fires (or returns True), or nothing is left to do."""
        if isinstance(until, Event):
            ev = until
            done = lambda: ev.triggered  # noqa: E731
        else:
            done = until or (lambda: False)
        self.last_progress = self.now
        heap = self._heap
        while True:
            while heap and heap[0][0] <= self.now:
                _, _, fn, arg = heapq.heappop(heap)
                fn(arg)
            if self.fabric is None:
                busy = False
            elif self._fabric_cycle != self.now:
                self._fabric_cycle = self.now
                busy = self.fabric(self.now)
            else:
                # re-entered a cycle the fabric already stepped: just move on
                busy = True
            if done():
                return
            if max_cycles is not None and self.now >= max_cycles:
                return
            if busy:
                nxt = self.now + 1
            elif heap:
                nxt = max(self.now + 1, heap[0][0])
            else:
                if until is None:
                    return
                raise DeadlockError(
                    f"deadlock at cycle {self.now}: no events pending and the NoC is idle",
                    self.now, self.diagnose())
            if nxt - self.last_progress > self.watchdog_cycles:
                raise DeadlockError(
                    f"watchdog: no NoC delivery for {self.watchdog_cycles} cycles "
                    f"(cycle {self.now})", self.now, self.diagnose())
            self.now = nxt
