"""N-process abortable lock: a complete Δ-ary arbitration tree of node locks.

Process ``p`` climbs from its leaf to the root, locking one ``NodeLock(Δ)``
per level with the index of the child it came from as pseudo-ID.  A node lock
may instead return a height ``j``: the previous owner handed over every node
on the path up to height ``j`` and the climb resumes above it.  Release climbs
the same path and stops at the first node where the lock is handed over.
"""

from __future__ import annotations

from .nodelock import NodeLock
from .sim import AbortPoll, SimulationFault
from .words import BOT, INF, is_int


def choose_delta(num_leaves: int) -> int:
    """Smallest Δ ≥ 2 with Δ^(Δ-1) ≥ N."""
    if num_leaves < 1:
        raise ValueError("need at least one leaf")
    d = 2
    while d ** (d - 1) < num_leaves:
        d += 1
    return d


def tree_height(num_leaves: int, delta: int) -> int:
    """Smallest h ≥ 1 with Δ^h ≥ N."""
    h = 1
    while delta ** h < num_leaves:
        h += 1
    return h


class TreeLock:
    def __init__(self, mem, num_leaves: int, delta: int | None = None, faults=frozenset()):
        self.N = num_leaves
        self.delta = delta if delta is not None else choose_delta(num_leaves)
        if self.delta < 2:
            raise ValueError("branching factor must be at least 2")
        self.height = tree_height(num_leaves, self.delta)
        self.levels: list[list[NodeLock]] = [[]]
        for level in range(1, self.height + 1):
            width = self.delta ** (self.height - level)
            self.levels.append([NodeLock(mem, self.delta, faults) for _ in range(width)])
        self.root = self.levels[self.height][0]

    @property
    def nodes(self) -> list[NodeLock]:
        return [u for level in self.levels for u in level]

    def node_on_path(self, leaf: int, level: int) -> tuple[NodeLock, int]:
        """The ``level``-th node above ``leaf`` and the child index leading to it."""
        if not 0 <= leaf < self.delta ** self.height:
            raise SimulationFault(f"leaf {leaf} not in tree")
        if not 1 <= level <= self.height:
            raise SimulationFault(f"level {level} outside 1..{self.height}")
        below = self.delta ** (level - 1)
        return self.levels[level][leaf // (below * self.delta)], (leaf // below) % self.delta

    def lock(self, leaf: int):
        owned = 0
        while owned < self.height:
            node, i = self.node_on_path(leaf, owned + 1)
            val = yield from node.lock(i)
            if val is INF:
                owned += 1
            elif val is not BOT:
                if not is_int(val) or val < owned + 1 or val > self.height:
                    raise SimulationFault(f"hand-over of height {val!r} at level {owned + 1}")
                owned = val
            if (yield AbortPoll(await_site=False)):
                yield from self.release(leaf, owned)
                return BOT
        return INF

    def release(self, leaf: int, owned: int | None = None):
        if owned is None:
            owned = self.height
        k = 1
        while k <= owned:
            node, i = self.node_on_path(leaf, k)
            handed = yield from node.release(i, owned)
            if handed:
                break
            k += 1
