"""Experiment configuration, machine setup and randomized runs."""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import asdict, dataclass, field
from typing import Any

from ..counter import CasCounterSpec, RCasCounter
from ..nodelock import NodeLock
from ..promotion import PromotionArray
from ..sim import ConfigurationError, Machine, SimulationFault, Trace, run
from ..treelock import TreeLock, choose_delta
from ..uc import UC, UCWeak
from ..words import BOT, INF, encode, is_int
from .aborts import make_abort_policy
from .clients import counter_call, node_lock_client, op_client, tree_lock_client
from .monitor import SafetyMonitor, Violation
from .schedulers import make_scheduler

OBJECTS = ("rcas_counter", "uc", "uc_weak", "promotion_array", "node_lock", "tree_lock")


@dataclass
class ExperimentConfig:
    object: str = "node_lock"
    size: int = 2  # k for counters/arrays, n for node locks, N for tree locks
    processes: int = 2
    passages: int = 1
    delta: int | None = None
    leaves: list[int] | None = None
    ops_per_process: int = 3
    scheduler: dict = field(default_factory=lambda: {"kind": "uniform_random", "seed": 0})
    aborts: dict = field(default_factory=lambda: {"kind": "never"})
    step_budget: int = 1_000_000
    seed: int = 0
    faults: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.faults = list(self.faults)
        if self.leaves is not None:
            self.leaves = list(self.leaves)
        if self.object not in OBJECTS:
            raise ConfigurationError(f"unknown object {self.object!r}")
        if self.processes < 1:
            raise ConfigurationError("need at least one process")
        if self.object == "node_lock" and self.processes > self.size:
            raise ConfigurationError("node_lock clients use one pseudo-ID each")
        if self.object == "promotion_array" and self.processes - 1 > self.size:
            raise ConfigurationError("promotion_array needs one entry per updating process")
        if self.object == "tree_lock":
            leaves = self.tree_leaves()
            if len(leaves) != self.processes or len(set(leaves)) != len(leaves):
                raise ConfigurationError("tree_lock needs one distinct leaf per process")
            if any(not 0 <= leaf < self.size for leaf in leaves):
                raise ConfigurationError("leaf outside 0..N-1")

    def tree_leaves(self) -> list[int]:
        return list(self.leaves) if self.leaves is not None else list(range(self.processes))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        return cls(**d)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class Setup:
    machine: Machine
    monitor: SafetyMonitor
    programs: list
    target: Any
    lock_id: Any = None


def _random_ops(config: ExperimentConfig) -> list[list[tuple]]:
    rng = random.Random(config.seed)
    k = config.size
    ops: list[list[tuple]] = []
    for pid in range(config.processes):
        mine = []
        for _ in range(config.ops_per_process):
            if config.object in ("rcas_counter", "uc", "uc_weak"):
                r = rng.random()
                if r < 0.5:
                    mine.append(("inc",))
                elif r < 0.75:
                    mine.append(("read",))
                else:
                    mine.append(("cas", rng.randrange(k + 1), rng.randrange(k + 2)))
            elif pid == 0:
                r = rng.random()
                if r < 0.35:
                    mine.append(("collect", tuple(rng.choice([BOT, rng.randrange(1, 9)]) for _ in range(k))))
                elif r < 0.7:
                    mine.append(("promote",))
                elif r < 0.85:
                    mine.append(("remove", rng.randrange(k)))
                else:
                    mine.append(("reset",))
            else:
                mine.append(("update", pid - 1, rng.randrange(1, 9)))
        ops.append(mine)
    return ops


def build(config: ExperimentConfig, *, record: bool = True, coins=None) -> Setup:
    aborts = make_abort_policy(config.aborts)
    monitor = SafetyMonitor()
    m = Machine(config.processes, config.seed, coins=coins, record=record, monitor=monitor, aborts=aborts)
    obj = config.object
    lock_id = None
    if obj == "rcas_counter":
        target = RCasCounter(m, config.size)
        programs = [op_client(counter_call(target), _random_ops(config))] * config.processes
    elif obj in ("uc", "uc_weak"):
        spec = CasCounterSpec(config.size)
        target = UC(m, spec, config.processes) if obj == "uc" else UCWeak(m, spec)

        def call(pid, op, target=target, obj=obj):
            if pid == 0:
                r = yield from target.perform_fast(op)
            elif obj == "uc":
                r = yield from target.perform_slow(op, pid)
            else:
                r = yield from target.perform_slow(op)
            return r

        programs = [op_client(call, _random_ops(config))] * config.processes
    elif obj == "promotion_array":
        target = PromotionArray(m, config.size)

        def call(pid, op, pa=target):
            if op[0] == "update":
                r = yield from pa.update(op[1], op[2])
            else:
                r = yield from pa.uc.perform_fast(op)
            return r

        programs = [op_client(call, _random_ops(config))] * config.processes
    elif obj == "node_lock":
        target = NodeLock(m, config.size, config.faults)
        monitor.capacities[target.uid] = target.n
        monitor.apply_cells[target.uid] = target.apply
        lock_id = target.uid
        programs = [node_lock_client(target, config.passages)] * config.processes
    else:
        delta = config.delta or choose_delta(config.size)
        target = TreeLock(m, config.size, delta, config.faults)
        for node in target.nodes:
            monitor.capacities[node.uid] = node.n
            monitor.apply_cells[node.uid] = node.apply
        lock_id = ("tree", target.root.uid)
        programs = [tree_lock_client(target, config.passages, config.tree_leaves())] * config.processes
    return Setup(m, monitor, programs, target, lock_id)


# ---------------------------------------------------------------- metrics


@dataclass
class MetricsReport:
    config: ExperimentConfig
    status: str  # pass | violation | budget_exhausted
    violation: tuple[str, str] | None
    passages: list[dict]
    steps: int
    rmrs: list[int]
    max_helps: int = 0
    slow_steps: list[int] = field(default_factory=list)
    trace: Trace | None = None

    @property
    def completed(self) -> list[dict]:
        return [p for p in self.passages if p.get("returned") is not None]

    def mean_rmrs(self, aborted: bool = False) -> float:
        xs = [p["rmrs"] for p in self.completed if p["aborted"] == aborted]
        return sum(xs) / len(xs) if xs else 0.0

    def summary(self) -> dict:
        done = self.completed
        return {
            "config_hash": self.config.config_hash(),
            "status": self.status,
            "violation": list(self.violation) if self.violation else None,
            "steps": self.steps,
            "passages": len(done),
            "aborted": sum(1 for p in done if p["aborted"]),
            "mean_rmrs": self.mean_rmrs(False),
            "mean_rmrs_aborted": self.mean_rmrs(True),
            "max_helps": self.max_helps,
            "max_slow_steps": max(self.slow_steps, default=0),
        }


def extract_passages(trace: Trace) -> list[dict]:
    """Per-passage records from the ``passage`` notes and their neighbours."""
    open_: dict[int, dict] = {}
    out: list[dict] = []
    counts = [0] * trace.num_processes
    for e in trace.events:
        p = e.pid
        if e.effect == "signal":
            rec = open_.get(p)
            if rec is not None and rec["signal_rmr"] is None:
                rec["signal_rmr"] = e.result
            continue
        if e.effect != "note":
            continue
        tag, data = e.args
        rec = open_.get(p)
        if tag == "passage":
            if data == "begin":
                rec = {
                    "pid": p, "passage": counts[p], "start_rmr": e.result, "signal_rmr": None,
                    "returned": None, "role_final": None, "pseudo_id": None,
                    "nodes_captured": 0, "handovers_received": 0, "handovers_given": 0,
                    "lock_rmrs": None, "release_rmrs": None, "release_returned": None,
                    "_lock_start": None, "_rel_start": None, "_depth": 0,
                }
                counts[p] += 1
                open_[p] = rec
                out.append(rec)
            else:
                rec["returned"] = data[1]
                rec["aborted"] = data[1] is BOT
                rec["rmrs"] = e.result - rec["start_rmr"]
                rec["post_signal_rmrs"] = (
                    e.result - rec["signal_rmr"] if rec["signal_rmr"] is not None else None
                )
                del open_[p]
        elif rec is None:
            continue
        elif tag == "lock_begin":
            if rec["_lock_start"] is None:
                rec["_lock_start"] = e.result
                rec["pseudo_id"] = data[1]
        elif tag == "lock_end":
            val = data[2]
            if val is INF:
                rec["nodes_captured"] += 1
            elif is_int(val):
                rec["handovers_received"] += 1
            rec["lock_rmrs"] = e.result - rec["_lock_start"]
        elif tag == "role":
            rec["role_final"] = data[2]
        elif tag == "release_begin":
            if rec["_rel_start"] is None:
                rec["_rel_start"] = e.result
        elif tag == "release_end":
            if data[3]:
                rec["handovers_given"] += 1
            rec["release_rmrs"] = e.result - rec["_rel_start"]
            rec["release_returned"] = data[3]
    for rec in out:
        for key in ("_lock_start", "_rel_start", "_depth"):
            rec.pop(key, None)
        rec.setdefault("aborted", None)
        rec.setdefault("rmrs", None)
        rec.setdefault("post_signal_rmrs", None)
    return out


def run_random(config: ExperimentConfig, *, keep_trace: bool = True, coins=None, scheduler=None) -> MetricsReport:
    setup = build(config, coins=coins)
    m = setup.machine
    m.trace.header = {"num_processes": config.processes, "config": config.to_dict()}
    if scheduler is None:
        spec = dict(config.scheduler)
        spec.setdefault("seed", config.seed)
        scheduler = make_scheduler(spec)
    violation = None
    try:
        m.load(setup.programs)
        run(m, scheduler, config.step_budget)
        if m.finished:
            setup.monitor.finish()
            status = "pass"
        elif getattr(scheduler, "fair", False):
            status = "violation"
            violation = ("starvation", f"live processes {m.runnable()} after {m.clock} steps under a fair scheduler")
        else:
            status = "budget_exhausted"
    except Violation as v:
        status, violation = "violation", (v.kind, v.detail)
    except SimulationFault as f:
        status, violation = "violation", ("fault", str(f))
    trace = m.trace
    return MetricsReport(
        config=config,
        status=status,
        violation=violation,
        passages=extract_passages(trace),
        steps=m.clock,
        rmrs=list(trace.rmrs),
        max_helps=setup.monitor.max_helps,
        slow_steps=list(setup.monitor.slow_steps),
        trace=trace if keep_trace else None,
    )


def extract_history(trace: Trace) -> list:
    """Operation records ``(pid, op, result, inv_t, res_t)`` from ``op`` notes."""
    from .linearize import Operation

    pending: dict[int, tuple] = {}
    ops = []
    for e in trace.notes("op"):
        what, payload = e.args[1]
        if what == "inv":
            pending[e.pid] = (payload, e.t)
        else:
            op, t0 = pending.pop(e.pid)
            ops.append(Operation(e.pid, op, payload, t0, e.t))
    for pid, (op, t0) in pending.items():
        ops.append(Operation(pid, op, None, t0, None))
    return ops


def describe(report: MetricsReport) -> str:
    return json.dumps(encode(report.summary()), sort_keys=True)


def replay_trace(trace: Trace) -> tuple[MetricsReport, bool]:
    """Re-run a recorded trace from its header, schedule, coins and signals.

    Returns the new report and whether its trace matches the recorded one
    event for event.
    """
    from .schedulers import Scripted

    if "config" not in trace.header:
        raise ConfigurationError("trace has no config header")
    signals = [[e.args[0], e.args[1], e.pid] for e in trace.events if e.effect == "signal"]
    cfg = ExperimentConfig.from_dict({
        **trace.header["config"],
        "aborts": {"kind": "scripted", "signals": signals},
        "step_budget": trace.steps,
    })
    coins = iter(trace.coin_values())
    report = run_random(cfg, coins=lambda pid, m: next(coins), scheduler=Scripted(trace.schedule()))
    return report, report.trace.events == trace.events
