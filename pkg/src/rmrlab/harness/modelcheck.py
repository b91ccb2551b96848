"""Exhaustive state-space exploration for small configurations.

The checker branches on every scheduling choice, on every outcome of every
coin flip, and (while the abort budget lasts) on delivering an abort signal
to any process that is spinning in an await loop.

Generators cannot be copied, so a process is stored as the log of values it
was resumed with; a live generator is rebuilt from the log when needed, and
spare generators are pooled so most transitions reuse one instead of
replaying.  States are deduplicated by a key made of all cell values, each
process's generator frames (code position plus locals), pending abort signals
and the monitor's safety state.  Keys are used as dictionary keys, so a hash
collision falls back to full comparison.

Besides the monitor's safety properties, a finished exploration checks that
every reachable state can still reach a state where all processes have
finished; a state that cannot is reported as a deadlock.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any

from ..sim import Flip, SimulationFault
from .experiment import ExperimentConfig, build, run_random
from .monitor import Violation
from .schedulers import Scripted as ScriptedScheduler


@dataclass
class Verdict:
    status: str  # pass | violation | budget_exhausted
    kind: str | None = None
    detail: str | None = None
    witness: list[tuple] | None = None
    stats: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "pass"


def _freeze(v: Any) -> Any:
    if isinstance(v, list):
        return tuple(_freeze(x) for x in v)
    if isinstance(v, dict):
        return tuple(sorted((k, _freeze(x)) for k, x in v.items()))
    if isinstance(v, set):
        return frozenset(v)
    return v


def frame_signature(gen) -> tuple | None:
    """Code positions and local variables along a generator's ``yield from`` chain."""
    parts = []
    g = gen
    while g is not None:
        frame = g.gi_frame
        if frame is None:
            return None if g is gen else tuple(parts)
        parts.append((g.gi_code, frame.f_lasti, tuple(_freeze(v) for v in frame.f_locals.values())))
        g = g.gi_yieldfrom
    return tuple(parts)


@dataclass(frozen=True)
class _State:
    logs: tuple
    sigs: tuple
    cells: tuple
    signals: tuple
    budget: int
    mon: tuple

    @property
    def key(self):
        return (self.cells, self.sigs, self.signals, self.budget, self.mon)

    @property
    def finished(self) -> bool:
        return all(s is None for s in self.sigs)


class ModelChecker:
    def __init__(self, config: ExperimentConfig, *, abort_budget: int = 0, max_states: int = 2_000_000,
                 check_deadlock: bool = True, hashing: bool = True, pool_size: int = 4096,
                 depth_bound: int | None = None):
        self.config = config
        self.abort_budget = abort_budget
        self.max_states = max_states
        self.check_deadlock = check_deadlock
        self.hashing = hashing
        self.depth_bound = depth_bound
        self.setup = build(config, record=False)
        m = self.machine = self.setup.machine
        m.aborts = None
        self.monitor = self.setup.monitor
        self.pool: OrderedDict = OrderedDict()
        self.pool_size = pool_size
        self.replays = 0
        m.load(self.setup.programs)

    # -- machine state plumbing

    def _capture(self, budget: int, sigs: tuple) -> _State:
        m = self.machine
        return _State(
            logs=tuple(p.log for p in m.procs),
            sigs=sigs,
            cells=tuple(c.value for c in m.cells),
            signals=tuple(p.signal for p in m.procs),
            budget=budget,
            mon=self.monitor.snapshot(),
        )

    def _stash(self, proc) -> None:
        self.pool[id(proc.log)] = (proc.log, proc.gen, proc.pending, proc.done)
        if len(self.pool) > self.pool_size:
            self.pool.popitem(last=False)

    def _materialize(self, pid: int, log) -> None:
        proc = self.machine.procs[pid]
        entry = self.pool.pop(id(log), None)
        if entry is not None and entry[0] is log:
            _, proc.gen, proc.pending, proc.done = entry
            proc.log = log
            return
        self.replays += 1
        values = []
        node = log
        while node is not None:
            values.append(node[0])
            node = node[1]
        values.reverse()
        gen = self.machine.factories[pid](pid)
        pending, done = None, False
        try:
            for v in values:
                pending = gen.send(v)
        except StopIteration:
            done, pending = True, None
        proc.gen, proc.pending, proc.done, proc.log = gen, pending, done, log

    def _restore(self, st: _State) -> None:
        m = self.machine
        for cell, v in zip(m.cells, st.cells):
            cell.value = v
        for pid, proc in enumerate(m.procs):
            if proc.log is not st.logs[pid]:
                self._stash(proc)
                self._materialize(pid, st.logs[pid])
            proc.signal = st.signals[pid]
        self.monitor.restore(st.mon)

    def _transitions(self, st: _State) -> list[tuple]:
        out = []
        for pid, proc in enumerate(self.machine.procs):
            if proc.done:
                continue
            eff = proc.pending
            if type(eff) is Flip:
                out.extend(("step", pid, v) for v in range(eff.m))
            else:
                out.append(("step", pid, None))
            if st.budget > 0 and not st.signals[pid] and getattr(eff, "spin", False):
                out.append(("signal", pid, None))
        return out

    def _apply(self, st: _State, tr: tuple) -> _State:
        kind, pid, coin = tr
        if kind == "signal":
            signals = st.signals[:pid] + (True,) + st.signals[pid + 1:]
            return _State(st.logs, st.sigs, st.cells, signals, st.budget - 1, st.mon)
        self.machine.step(pid, coin)
        proc = self.machine.procs[pid]
        sig = None if proc.done else (frame_signature(proc.gen) if self.hashing else proc.log)
        sigs = st.sigs[:pid] + (sig,) + st.sigs[pid + 1:]
        child = self._capture(st.budget, sigs)
        if child.finished:
            self.monitor.finish()
        return child

    def _root(self, prefix) -> _State:
        m = self.machine
        sigs = tuple(None if p.done else (frame_signature(p.gen) if self.hashing else p.log) for p in m.procs)
        st = self._capture(self.abort_budget, sigs)
        for tr in prefix or ():
            self._restore(st)
            st = self._apply(st, tuple(tr))
        return st

    # -- search

    def run(self, prefix=None) -> Verdict:
        parent: list[tuple[int, tuple | None]] = [(-1, None)]
        succ: list[list[int]] = [[]]
        try:
            root = self._root(prefix)
        except (Violation, SimulationFault) as exc:
            return self._violation(exc, [], prefix)
        visited = {root.key: 0}
        terminal: list[int] = []
        stack = [(root, 0, 0)]
        transitions = 0
        truncated = 0
        while stack:
            st, sid, depth = stack.pop()
            if st.finished:
                terminal.append(sid)
                continue
            if self.depth_bound is not None and depth >= self.depth_bound:
                truncated += 1
                continue
            self._restore(st)
            for tr in self._transitions(st):
                transitions += 1
                self._restore(st)
                try:
                    child = self._apply(st, tr)
                except (Violation, SimulationFault) as exc:
                    return self._violation(exc, self._path(parent, sid) + [tr], prefix)
                key = child.key
                cid = visited.get(key)
                if cid is None:
                    cid = len(parent)
                    if cid >= self.max_states:
                        return Verdict("budget_exhausted", stats=self._stats(len(parent), transitions, len(stack)))
                    visited[key] = cid
                    parent.append((sid, tr))
                    succ.append([])
                    stack.append((child, cid, depth + 1))
                succ[sid].append(cid)
        stats = self._stats(len(parent), transitions, 0)
        stats["terminal_states"] = len(terminal)
        if truncated:
            stats["truncated"] = truncated
            return Verdict("budget_exhausted", detail=f"depth bound {self.depth_bound} cut {truncated} states",
                           stats=stats)
        if self.check_deadlock:
            stuck = _cannot_finish(succ, terminal)
            if stuck is not None:
                return Verdict("violation", "deadlock",
                               f"state {stuck} cannot reach a state where every process has finished",
                               list(prefix or []) + self._path(parent, stuck), stats)
        return Verdict("pass", stats=stats)

    def _violation(self, exc, path, prefix) -> Verdict:
        kind = exc.kind if isinstance(exc, Violation) else "fault"
        detail = exc.detail if isinstance(exc, Violation) else str(exc)
        return Verdict("violation", kind, detail, list(prefix or []) + path, {"replays": self.replays})

    def _stats(self, states, transitions, frontier) -> dict:
        return {"states": states, "transitions": transitions, "frontier": frontier, "replays": self.replays}

    @staticmethod
    def _path(parent, sid) -> list[tuple]:
        path = []
        while sid > 0:
            sid, tr = parent[sid]
            path.append(tr)
        path.reverse()
        return path


def _cannot_finish(succ: list[list[int]], terminal: list[int]) -> int | None:
    pred: list[list[int]] = [[] for _ in succ]
    for a, outs in enumerate(succ):
        for b in outs:
            pred[b].append(a)
    good = [False] * len(succ)
    work = list(terminal)
    for t in work:
        good[t] = True
    while work:
        b = work.pop()
        for a in pred[b]:
            if not good[a]:
                good[a] = True
                work.append(a)
    for sid, ok in enumerate(good):
        if not ok:
            return sid
    return None


def model_check(config: ExperimentConfig, *, abort_budget: int = 0, max_states: int = 2_000_000,
                hashing: bool = True, depth_bound: int | None = None) -> Verdict:
    """Explore every behaviour of ``config``.

    A scheduler of kind ``exhaustive_dfs`` in the config supplies the default
    ``depth_bound``; the config's abort policy is ignored in favour of
    ``abort_budget`` injected signals.
    """
    if depth_bound is None and config.scheduler.get("kind") == "exhaustive_dfs":
        depth_bound = config.scheduler.get("depth_bound")
    return ModelChecker(config, abort_budget=abort_budget, max_states=max_states, hashing=hashing,
                        depth_bound=depth_bound).run()


def replay_witness(config: ExperimentConfig, witness):
    """Re-run a witness on a recording machine; returns the metrics report."""
    steps = [tuple(t) for t in witness]
    pids = [pid for kind, pid, _ in steps if kind == "step"]
    coins = iter([coin for kind, _, coin in steps if kind == "step" and coin is not None])
    signals = []
    clock = 0
    for kind, pid, _ in steps:
        if kind == "step":
            clock += 1
        else:
            signals.append(["step", clock, pid])
    cfg = ExperimentConfig.from_dict({
        **config.to_dict(),
        "aborts": {"kind": "scripted", "signals": signals},
        "step_budget": len(pids),
    })
    return run_random(cfg, coins=lambda pid, m: next(coins), scheduler=ScriptedScheduler(pids))


def confirm(config: ExperimentConfig, verdict: Verdict, make_checker=None) -> bool:
    """Check that a violation verdict reproduces from its witness.

    Deadlocks are re-checked by exploring from the end of the witness with a
    checker from ``make_checker(config)`` (default: a plain ModelChecker).
    """
    if verdict.status != "violation":
        return False
    if verdict.kind == "deadlock":
        checker = make_checker(config) if make_checker else ModelChecker(config)
        again = checker.run(prefix=verdict.witness)
        return again.status == "violation" and again.kind == "deadlock" and again.witness[:len(verdict.witness)] == verdict.witness
    report = replay_witness(config, verdict.witness)
    return report.status == "violation" and report.violation[0] == verdict.kind
