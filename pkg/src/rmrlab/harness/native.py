"""Run the lock generators on real OS threads.

Each thread drives its own generator directly against a shared list of
cells.  Reads and writes of a list slot are atomic under the interpreter
lock; CAS takes one global mutex.  That gives sequentially consistent cells,
which is all the algorithms assume.  There is no RMR accounting here.

Mutual exclusion is checked with a critical-section occupancy counter.  A
watchdog declares a livelock when no passage completes for ``stall_seconds``.
"""

from __future__ import annotations

import random
import threading
import time
from dataclasses import dataclass

from ..nodelock import NodeLock
from ..sim import AbortPoll, Cas, CellKind, ConfigurationError, Flip, Local, Note, Read, Write
from ..treelock import TreeLock
from ..words import BOT, INF, is_int
from .clients import node_lock_client, tree_lock_client
from .modelcheck import Verdict


SPIN_YIELDS = 2
SPIN_SLEEP = 2e-4


class NativeMemory:
    def __init__(self):
        self.cells: list = []
        self.kinds: list[CellKind] = []
        self.cas_lock = threading.Lock()

    def alloc_cell(self, kind, init=0) -> int:
        self.cells.append(init)
        self.kinds.append(CellKind(kind))
        return len(self.cells) - 1


class _Stop(Exception):
    pass


@dataclass
class StressConfig:
    object: str = "tree_lock"
    threads: int = 8
    passages: int = 10_000
    size: int | None = None  # N for tree locks (default: one leaf per thread), n for node locks
    delta: int | None = 3
    abort_probability: float = 0.0
    seed: int = 0
    faults: tuple = ()
    stall_seconds: float = 10.0
    time_limit: float | None = None


class _Shared:
    def __init__(self, threads):
        self.guard = threading.Lock()
        self.occupants: list[int] = []
        self.violation: tuple | None = None
        self.progress = 0
        self.passages = [0] * threads
        self.aborted = 0
        self.stop = False


def _drive(pid, gen, mem: NativeMemory, shared: _Shared, rng: random.Random, p_abort: float,
           handover_ok: bool = False):
    cells = mem.cells
    cas_lock = mem.cas_lock
    signal = False
    value = None
    passage = 0
    spins = 0
    while True:
        try:
            eff = gen.send(value)
        except StopIteration:
            return
        cls = type(eff)
        value = None
        if cls is Read or cls is Cas:
            if eff.spin:
                if shared.stop:
                    raise _Stop
                # back off so that the thread holding the lock gets the interpreter
                spins += 1
                time.sleep(0 if spins < SPIN_YIELDS else SPIN_SLEEP)
            else:
                spins = 0
        if cls is Read:
            value = cells[eff.cell]
        elif cls is Cas:
            with cas_lock:
                value = cells[eff.cell] == eff.expected
                if value:
                    cells[eff.cell] = eff.new
        elif cls is Write:
            cells[eff.cell] = eff.value
        elif cls is Flip:
            value = rng.randrange(eff.m)
        elif cls is AbortPoll:
            if eff.await_site and not signal and p_abort and rng.random() < p_abort:
                signal = True
            value = signal
        elif cls is Local:
            if eff.tag == "cs":
                time.sleep(0)
        elif cls is Note:
            tag, data = eff.tag, eff.data
            if tag == "cs":
                with shared.guard:
                    if data[1] == "enter":
                        shared.occupants.append(pid)
                        if len(shared.occupants) > 1 and shared.violation is None:
                            shared.violation = ("mutual-exclusion", f"critical section held by threads {shared.occupants}",
                                                [(q, shared.passages[q]) for q in shared.occupants])
                            shared.stop = True
                    else:
                        shared.occupants.remove(pid)
            elif tag == "passage":
                if data == "begin":
                    signal = False
                else:
                    val = data[1]
                    if val is not INF and val is not BOT and not (handover_ok and is_int(val)):
                        with shared.guard:
                            shared.violation = ("return", f"thread {pid} lock returned {val!r}", [(pid, passage)])
                            shared.stop = True
                    passage += 1
                    with shared.guard:
                        shared.passages[pid] = passage
                        shared.progress += 1
                        if val is BOT:
                            shared.aborted += 1
            elif tag == "lock_end" and data[2] is not BOT and data[2] is not INF and not is_int(data[2]):
                with shared.guard:
                    shared.violation = ("return", f"node lock returned {data[2]!r}", [(pid, passage)])
                    shared.stop = True
        else:
            raise ConfigurationError(f"thread {pid} yielded {eff!r}")


def stress_native(cfg: StressConfig) -> Verdict:
    if cfg.threads < 1:
        raise ConfigurationError("need at least one thread")
    mem = NativeMemory()
    if cfg.object == "tree_lock":
        size = cfg.size or cfg.threads
        if size < cfg.threads:
            raise ConfigurationError("one leaf per thread")
        lock = TreeLock(mem, size, cfg.delta, cfg.faults)
        program = tree_lock_client(lock, cfg.passages, list(range(cfg.threads)))
    elif cfg.object == "node_lock":
        size = cfg.size or cfg.threads
        if size < cfg.threads:
            raise ConfigurationError("one pseudo-ID per thread")
        lock = NodeLock(mem, size, cfg.faults)
        program = node_lock_client(lock, cfg.passages)
    else:
        raise ConfigurationError(f"native stress supports node_lock and tree_lock, not {cfg.object!r}")

    shared = _Shared(cfg.threads)
    errors: list = []

    def body(pid):
        rng = random.Random(cfg.seed * 7919 + pid)
        try:
            _drive(pid, program(pid), mem, shared, rng, cfg.abort_probability, cfg.object == "node_lock")
        except _Stop:
            pass
        except Exception as exc:  # surfaced in the verdict
            errors.append((pid, repr(exc)))
            shared.stop = True

    threads = [threading.Thread(target=body, args=(p,), daemon=True) for p in range(cfg.threads)]
    start = time.monotonic()
    for t in threads:
        t.start()
    last, last_change = -1, time.monotonic()
    status, kind, detail, witness = "pass", None, None, None
    while any(t.is_alive() for t in threads):
        time.sleep(0.05)
        now = time.monotonic()
        if shared.violation is not None or errors:
            break
        if shared.progress != last:
            last, last_change = shared.progress, now
        elif now - last_change > cfg.stall_seconds:
            status, kind = "violation", "livelock"
            detail = f"no passage completed for {cfg.stall_seconds}s; passages per thread {shared.passages}"
            witness = list(enumerate(shared.passages))
            break
        if cfg.time_limit is not None and now - start > cfg.time_limit:
            status, kind, detail = "budget_exhausted", None, f"time limit {cfg.time_limit}s reached"
            break
    shared.stop = True
    for t in threads:
        t.join(timeout=1.0)
    if shared.violation is not None:
        status, (kind, detail, witness) = "violation", shared.violation
    elif errors:
        status, kind, detail, witness = "violation", "exception", str(errors), errors
    stats = {
        "threads": cfg.threads,
        "passages": sum(shared.passages),
        "aborted": shared.aborted,
        "seconds": round(time.monotonic() - start, 3),
    }
    return Verdict(status, kind, detail, witness, stats)
