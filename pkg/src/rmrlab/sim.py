"""Deterministic simulated cache-coherent shared-memory machine.

Simulated processes are generators.  Each one yields *effects* and is resumed
with the effect's result::

    def program():
        v = yield Read(cell)
        ok = yield Cas(cell, v, v + 1)
        return ok

``Read``, ``Write``, ``Cas``, ``Flip`` and ``Local`` are scheduled steps; each
takes exactly one scheduler decision.  ``Note`` and ``AbortPoll`` are handled
inline while the process runs its local code up to the next step, so they never
create interleavings of their own.

RMR accounting follows the usual CC convention: a read is free iff the reader's
cached copy of the cell is current; every write and every CAS, successful or
not, costs one RMR and makes every other cached copy stale.

Coin flips are hidden from the scheduler until the flipping process completes
its next shared-memory step (the weak adversary).  Schedulers only ever get an
:class:`AdversaryView`.
"""

from __future__ import annotations

import enum
import json
import random
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Protocol

from .words import decode, encode


class SimulationFault(Exception):
    """Protocol misuse or an access the machine refuses to perform."""


class ConfigurationError(ValueError):
    pass


class CellKind(str, enum.Enum):
    REGISTER = "register"
    CAS = "cas"


# ---------------------------------------------------------------- effects


class Read(NamedTuple):
    cell: int
    spin: bool = False


class Write(NamedTuple):
    cell: int
    value: Any


class Cas(NamedTuple):
    cell: int
    expected: Any
    new: Any
    spin: bool = False


class Flip(NamedTuple):
    m: int


class Local(NamedTuple):
    tag: str = "local"


class Note(NamedTuple):
    tag: str
    data: Any = None


class AbortPoll(NamedTuple):
    await_site: bool = True


SHARED = (Read, Write, Cas)
STEP_EFFECTS = (Read, Write, Cas, Flip, Local)
_EFFECT_NAME = {Read: "read", Write: "write", Cas: "cas", Flip: "flip", Local: "local"}

Program = Iterator[Any]
ProgramFactory = Callable[[int], Program]


# ---------------------------------------------------------------- state


@dataclass
class Cell:
    value: Any
    kind: CellKind
    last_writer: int | None = None
    version: int = 0


def is_rmr(access: str, cached_version: int | None, version: int) -> bool:
    """Whether an access costs a remote memory reference."""
    if access == "read":
        return cached_version is None or cached_version < version
    if access in ("write", "cas"):
        return True
    raise ValueError(f"unknown access kind {access!r}")


class Event:
    __slots__ = ("t", "pid", "effect", "cell", "args", "result", "rmr", "revealed")

    def __init__(self, t, pid, effect, cell=None, args=(), result=None, rmr=False):
        self.t = t
        self.pid = pid
        self.effect = effect
        self.cell = cell
        self.args = args
        self.result = result
        self.rmr = rmr
        self.revealed = True

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "pid": self.pid,
            "effect": self.effect,
            "cell": self.cell,
            "args": encode(list(self.args)),
            "result": encode(self.result),
            "rmr": self.rmr,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Event:
        return cls(d["t"], d["pid"], d["effect"], d["cell"], decode(d["args"]), decode(d["result"]), d["rmr"])

    def __eq__(self, other):
        if not isinstance(other, Event):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"Event({self.t}, p{self.pid}, {self.effect}, cell={self.cell}, args={self.args}, result={self.result!r}, rmr={self.rmr})"


@dataclass
class Trace:
    num_processes: int
    events: list[Event] = field(default_factory=list)
    rmrs: list[int] = field(default_factory=list)
    header: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.rmrs:
            self.rmrs = [0] * self.num_processes

    @property
    def steps(self) -> int:
        return sum(1 for e in self.events if e.effect in _STEP_NAMES)

    def schedule(self) -> list[int]:
        return [e.pid for e in self.events if e.effect in _STEP_NAMES]

    def coin_values(self) -> list[int]:
        return [e.result for e in self.events if e.effect == "flip"]

    def notes(self, tag: str | None = None) -> Iterator[Event]:
        for e in self.events:
            if e.effect == "note" and (tag is None or e.args[0] == tag):
                yield e

    def check_ledger(self) -> None:
        totals = [0] * self.num_processes
        for i, e in enumerate(self.events):
            if e.t != i:
                raise AssertionError(f"event {i} has time {e.t}")
            if e.rmr:
                totals[e.pid] += 1
        if totals != self.rmrs:
            raise AssertionError(f"rmr ledger {self.rmrs} != recount {totals}")

    def to_jsonl(self) -> str:
        lines = []
        if self.header:
            lines.append(json.dumps({"t": -1, "effect": "header", "args": encode(self.header)}, sort_keys=True))
        lines.extend(json.dumps(e.to_dict(), sort_keys=True, ensure_ascii=False) for e in self.events)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> Trace:
        header: dict = {}
        events = []
        for line in text.splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            if d.get("effect") == "header":
                header = decode(d["args"])
                continue
            events.append(Event.from_dict(d))
        n = header.get("num_processes") or (1 + max((e.pid for e in events), default=0))
        trace = cls(n, events, header=header)
        for e in events:
            if e.rmr:
                trace.rmrs[e.pid] += 1
        return trace


_STEP_NAMES = frozenset(_EFFECT_NAME.values())


class Proc:
    __slots__ = ("pid", "gen", "pending", "done", "result", "rmrs", "steps",
                 "signal", "hidden", "log", "last_run")

    def __init__(self, pid: int):
        self.pid = pid
        self.gen = None
        self.pending = None
        self.done = False
        self.result = None
        self.rmrs = 0
        self.steps = 0
        self.signal = False
        self.hidden: Event | bool | None = None
        self.log = None
        self.last_run = -1


class Monitor(Protocol):
    def on_note(self, pid: int, note: Note, machine: Machine) -> None: ...


class AbortHooks(Protocol):
    def before_step(self, machine: Machine) -> None: ...
    def on_poll(self, machine: Machine, pid: int) -> bool: ...
    def on_passage(self, machine: Machine, pid: int) -> None: ...


class Machine:
    """The simulated machine.

    ``coins`` optionally overrides the PRNG with ``coins(pid, m) -> value``.
    With ``record=False`` no trace is kept and each process keeps a log of the
    values it was resumed with instead (used by the model checker to rebuild
    generators).
    """

    def __init__(self, num_processes: int, seed: int = 0, *, coins=None,
                 record: bool = True, monitor: Monitor | None = None,
                 aborts: AbortHooks | None = None):
        if num_processes < 1:
            raise ConfigurationError("a machine needs at least one process")
        self.n = num_processes
        self.seed = seed
        self.rng = random.Random(seed)
        self.coins = coins
        self.record = record
        self.monitor = monitor
        self.aborts = aborts
        self.cells: list[Cell] = []
        self.cache: list[dict[int, int]] = [{} for _ in range(num_processes)]
        self.procs = [Proc(p) for p in range(num_processes)]
        self.factories: list[ProgramFactory | None] = [None] * num_processes
        self.trace = Trace(num_processes)
        self.clock = 0  # scheduled steps so far
        self.running = False

    # -- memory

    def alloc_cell(self, kind: CellKind | str, init: Any = 0) -> int:
        if self.running:
            raise SimulationFault("cells cannot be allocated while the machine runs")
        self.cells.append(Cell(init, CellKind(kind)))
        return len(self.cells) - 1

    def _cell(self, cid: int) -> Cell:
        if not isinstance(cid, int) or not 0 <= cid < len(self.cells):
            raise SimulationFault(f"unknown cell {cid!r}")
        return self.cells[cid]

    def value(self, cid: int) -> Any:
        return self._cell(cid).value

    def exec_read(self, pid: int, cid: int) -> tuple[Any, bool]:
        cell = self._cell(cid)
        cache = self.cache[pid]
        rmr = is_rmr("read", cache.get(cid), cell.version)
        cache[cid] = cell.version
        return cell.value, rmr

    def exec_write(self, pid: int, cid: int, v: Any) -> tuple[None, bool]:
        cell = self._cell(cid)
        if cell.kind is not CellKind.REGISTER:
            raise SimulationFault(f"write to CAS cell {cid}")
        cell.value = v
        cell.version += 1
        cell.last_writer = pid
        self.cache[pid][cid] = cell.version
        return None, True

    def exec_cas(self, pid: int, cid: int, exp: Any, new: Any) -> tuple[bool, bool]:
        cell = self._cell(cid)
        if cell.kind is not CellKind.CAS:
            raise SimulationFault(f"CAS on register cell {cid}")
        ok = cell.value == exp
        if ok:
            cell.value = new
            cell.version += 1
            cell.last_writer = pid
        self.cache[pid][cid] = cell.version
        return ok, True

    def flip(self, pid: int, m: int) -> int:
        if m < 1:
            raise SimulationFault("flip over an empty range")
        if self.coins is not None:
            v = self.coins(pid, m)
            if not 0 <= v < m:
                raise SimulationFault(f"scripted coin {v} outside [0, {m})")
            return v
        return self.rng.randrange(m)

    # -- processes

    def load(self, programs: Iterable[ProgramFactory | Program]) -> None:
        programs = list(programs)
        if len(programs) != self.n:
            raise ConfigurationError(f"{len(programs)} programs for {self.n} processes")
        self.running = True
        for pid, prog in enumerate(programs):
            if callable(prog):
                self.factories[pid] = prog
                prog = prog(pid)
            proc = self.procs[pid]
            proc.gen = prog
            self._advance(proc, None)

    def runnable(self) -> list[int]:
        return [p.pid for p in self.procs if not p.done]

    @property
    def finished(self) -> bool:
        return all(p.done for p in self.procs)

    def signal_abort(self, pid: int, phase: str = "step") -> None:
        proc = self.procs[pid]
        if proc.signal:
            return
        proc.signal = True
        if self.record:
            self._emit(pid, "signal", None, (phase, self.clock), proc.rmrs)

    def step(self, pid: int, coin: int | None = None) -> Any:
        """Execute the pending effect of ``pid`` and run it to its next step."""
        if not 0 <= pid < self.n:
            raise SimulationFault(f"no process {pid}")
        proc = self.procs[pid]
        if proc.done:
            raise SimulationFault(f"process {pid} has finished")
        eff = proc.pending
        cls = type(eff)
        rmr = False
        cell = None
        if cls is Read:
            cell = eff.cell
            result, rmr = self.exec_read(pid, cell)
            args = ()
        elif cls is Cas:
            cell = eff.cell
            result, rmr = self.exec_cas(pid, cell, eff.expected, eff.new)
            args = (eff.expected, eff.new)
        elif cls is Write:
            cell = eff.cell
            result, rmr = self.exec_write(pid, cell, eff.value)
            args = (eff.value,)
        elif cls is Flip:
            result = coin if coin is not None else self.flip(pid, eff.m)
            if coin is not None and not 0 <= coin < eff.m:
                raise SimulationFault(f"coin {coin} outside [0, {eff.m})")
            args = (eff.m,)
        elif cls is Local:
            result = None
            args = (eff.tag,)
        else:
            raise SimulationFault(f"process {pid} yielded {eff!r}")
        self.clock += 1
        proc.steps += 1
        proc.last_run = self.clock
        if rmr:
            proc.rmrs += 1
        if self.record:
            ev = self._emit(pid, _EFFECT_NAME[cls], cell, args, result, rmr)
            if rmr:
                self.trace.rmrs[pid] += 1
            if cls is Flip:
                ev.revealed = False
                proc.hidden = ev
            elif cell is not None and proc.hidden is not None:
                proc.hidden.revealed = True
                proc.hidden = None
        elif cls is Flip:
            proc.hidden = True
        elif cell is not None:
            proc.hidden = None
        self._advance(proc, result)
        return result

    def _emit(self, pid, effect, cell, args=(), result=None, rmr=False) -> Event:
        ev = Event(len(self.trace.events), pid, effect, cell, args, result, rmr)
        self.trace.events.append(ev)
        return ev

    def _advance(self, proc: Proc, value: Any) -> None:
        gen = proc.gen
        record = self.record
        while True:
            if not record:
                proc.log = (value, proc.log)
            try:
                eff = gen.send(value)
            except StopIteration as stop:
                proc.done = True
                proc.pending = None
                proc.result = stop.value
                if record:
                    self._emit(proc.pid, "return", None, (), stop.value)
                return
            cls = type(eff)
            if cls is Note:
                begin = eff.tag == "passage" and eff.data == "begin"
                if begin:
                    proc.signal = False
                if record:
                    self._emit(proc.pid, "note", None, (eff.tag, eff.data), proc.rmrs)
                if self.monitor is not None:
                    self.monitor.on_note(proc.pid, eff, self)
                if begin and self.aborts is not None:
                    self.aborts.on_passage(self, proc.pid)
                value = None
            elif cls is AbortPoll:
                if eff.await_site and not proc.signal and self.aborts is not None:
                    if self.aborts.on_poll(self, proc.pid):
                        self.signal_abort(proc.pid, "poll")
                value = proc.signal
            else:
                proc.pending = eff
                return


def new_machine(num_processes: int, programs=None, seed: int = 0, **kw) -> Machine:
    m = Machine(num_processes, seed, **kw)
    if programs is not None:
        m.load(programs)
    return m


# ---------------------------------------------------------------- adversary


class AdversaryView:
    """What the weak adversary may look at.

    Flip results stay masked until the flipper's next shared-memory step
    completes.  While a process has such a hidden coin its pending effect is
    masked too, since the branch it took depends on the coin.
    """

    __slots__ = ("_m",)

    def __init__(self, machine: Machine):
        self._m = machine

    @property
    def time(self) -> int:
        return self._m.clock

    @property
    def num_processes(self) -> int:
        return self._m.n

    def runnable(self) -> list[int]:
        return self._m.runnable()

    def cell_value(self, cid: int) -> Any:
        return self._m.value(cid)

    def num_cells(self) -> int:
        return len(self._m.cells)

    def cached_by(self, cid: int) -> list[int]:
        """Processes holding a current cached copy of ``cid``."""
        version = self._m.cells[cid].version
        return [p for p, c in enumerate(self._m.cache) if c.get(cid) == version]

    def coin_hidden(self, pid: int) -> bool:
        return self._m.procs[pid].hidden is not None

    def pending(self, pid: int):
        proc = self._m.procs[pid]
        if proc.done or proc.hidden is not None:
            return None
        return proc.pending

    def last_run(self, pid: int) -> int:
        return self._m.procs[pid].last_run

    def history(self) -> Iterator[dict]:
        for e in self._m.trace.events:
            d = e.to_dict()
            if e.effect == "flip" and not e.revealed:
                d["result"] = None
            yield d


class Scheduler(Protocol):
    def choose(self, view: AdversaryView) -> int: ...


def run(machine: Machine, scheduler: Scheduler, step_budget: int) -> Trace:
    """Drive the machine until every process finishes or the budget runs out."""
    if step_budget < 0:
        raise ConfigurationError("negative step budget")
    view = AdversaryView(machine)
    aborts = machine.aborts
    for _ in range(step_budget):
        if machine.finished:
            break
        if aborts is not None:
            aborts.before_step(machine)
        pid = scheduler.choose(view)
        if not 0 <= pid < machine.n or machine.procs[pid].done:
            raise SimulationFault(f"scheduler chose non-runnable process {pid}")
        machine.step(pid)
    return machine.trace
