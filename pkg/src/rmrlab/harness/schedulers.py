"""Schedulers.  Every one of them decides from an ``AdversaryView`` only."""

from __future__ import annotations

import random

from ..sim import AdversaryView, Cas, ConfigurationError, Write


class RoundRobin:
    fair = True

    def __init__(self):
        self._next = 0

    def choose(self, view: AdversaryView) -> int:
        n = view.num_processes
        runnable = set(view.runnable())
        for k in range(n):
            pid = (self._next + k) % n
            if pid in runnable:
                self._next = pid + 1
                return pid
        raise ConfigurationError("nothing runnable")


class UniformRandom:
    fair = False

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def choose(self, view: AdversaryView) -> int:
        return self.rng.choice(view.runnable())


class LongestWaitingFirst:
    fair = True

    def choose(self, view: AdversaryView) -> int:
        return min(view.runnable(), key=lambda p: (view.last_run(p), p))


class InvalidationGreedy:
    """Prefer the write or CAS that invalidates the most cached copies."""

    fair = False

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def choose(self, view: AdversaryView) -> int:
        best, best_score = [], -1
        for pid in view.runnable():
            eff = view.pending(pid)
            score = 0
            if isinstance(eff, (Write, Cas)):
                score = 1 + sum(1 for q in view.cached_by(eff.cell) if q != pid)
            if score > best_score:
                best, best_score = [pid], score
            elif score == best_score:
                best.append(pid)
        return self.rng.choice(best)


class Scripted:
    """Replays a fixed list of choices."""

    fair = False

    def __init__(self, choices):
        self.choices = list(choices)
        self.pos = 0

    def choose(self, view: AdversaryView) -> int:
        if self.pos >= len(self.choices):
            raise ConfigurationError("script exhausted")
        pid = self.choices[self.pos]
        self.pos += 1
        return pid


def make_scheduler(spec: dict):
    kind = spec.get("kind", "uniform_random")
    if kind == "round_robin":
        return RoundRobin()
    if kind == "uniform_random":
        return UniformRandom(spec.get("seed", 0))
    if kind == "longest_waiting_first":
        return LongestWaitingFirst()
    if kind == "invalidation_greedy":
        return InvalidationGreedy(spec.get("seed", 0))
    if kind == "exhaustive_dfs":
        raise ConfigurationError("exhaustive_dfs is not a random scheduler; use model_check (rmrlab modelcheck)")
    raise ConfigurationError(f"unknown scheduler {kind!r}")
