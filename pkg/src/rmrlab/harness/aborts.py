"""Abort-signal injection policies.

Signals are sticky for the rest of a passage.  The lock code looks at them
only inside its await loops (and the tree lock once per climb iteration).
Every delivery shows up as a ``signal`` event in the trace.
"""

from __future__ import annotations

import random

from ..sim import ConfigurationError, Machine


class Never:
    def before_step(self, machine: Machine) -> None:
        pass

    def on_poll(self, machine: Machine, pid: int) -> bool:
        return False

    def on_passage(self, machine: Machine, pid: int) -> None:
        pass


class AtStep(Never):
    def __init__(self, t: int, pid: int):
        self.t = t
        self.pid = pid

    def before_step(self, machine):
        if machine.clock == self.t and not machine.procs[self.pid].done:
            machine.signal_abort(self.pid)


class PerAwaitProbability(Never):
    """Each time a waiting process re-checks, a signal arrives with probability p."""

    def __init__(self, p: float, seed: int = 0):
        if not 0.0 <= p <= 1.0:
            raise ConfigurationError("abort probability outside [0, 1]")
        self.p = p
        self.rng = random.Random(seed)

    def on_poll(self, machine, pid):
        return self.rng.random() < self.p


class AllButOne(Never):
    """Every process except ``keep`` is told to abort at the start of each passage."""

    def __init__(self, keep: int = 0):
        self.keep = keep

    def on_passage(self, machine, pid):
        if pid != self.keep:
            machine.signal_abort(pid, "passage")


class Scripted(Never):
    """Re-delivers the signals of a recorded trace."""

    def __init__(self, signals):
        # (phase, clock, pid)
        self.signals = {(ph, t, p) for ph, t, p in signals}

    def before_step(self, machine):
        for p in range(machine.n):
            if ("step", machine.clock, p) in self.signals and not machine.procs[p].done:
                machine.signal_abort(p, "step")

    def on_poll(self, machine, pid):
        return ("poll", machine.clock, pid) in self.signals

    def on_passage(self, machine, pid):
        if ("passage", machine.clock, pid) in self.signals:
            machine.signal_abort(pid, "passage")


def make_abort_policy(spec: dict | None):
    spec = spec or {"kind": "never"}
    kind = spec.get("kind", "never")
    if kind == "never":
        return Never()
    if kind == "at_step":
        return AtStep(spec["t"], spec["pid"])
    if kind == "per_await_probability":
        return PerAwaitProbability(spec["p"], spec.get("seed", 0))
    if kind == "all_but_one":
        return AllButOne(spec.get("keep", 0))
    if kind == "scripted":
        return Scripted(spec.get("signals", []))
    raise ConfigurationError(f"unknown abort policy {kind!r}")
