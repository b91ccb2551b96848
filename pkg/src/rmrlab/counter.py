"""Randomized bounded CAS counter.

``RCasCounter(k)`` keeps a value in ``0..k`` in a single CAS cell.  ``inc``
guesses the current value with a (k+1)-sided coin and verifies the guess with
one shared access, so it takes O(1) steps and fails with probability
``k/(k+1)`` against a scheduler that cannot see the coin.
"""

from __future__ import annotations

from dataclasses import dataclass

from .sim import Cas, CellKind, Flip, Read
from .words import FAIL


class RCasCounter:
    def __init__(self, mem, k: int):
        if k < 1:
            raise ValueError("counter bound must be positive")
        self.k = k
        self.count = mem.alloc_cell(CellKind.CAS, 0)

    def inc(self):
        beta = yield Flip(self.k + 1)
        if beta == self.k:
            v = yield Read(self.count)
            if v == self.k:
                return self.k
        else:
            ok = yield Cas(self.count, beta, beta + 1)
            if ok:
                return beta
        return FAIL

    def cas(self, old, new):
        if new not in range(self.k + 1):
            return False
        ok = yield Cas(self.count, old, new)
        return ok

    def read(self, spin: bool = False):
        v = yield Read(self.count, spin)
        return v


@dataclass(frozen=True)
class CasCounterSpec:
    """Sequential CASCounter(k); state is the integer value."""

    k: int
    initial: int = 0

    def apply(self, x: int, op: tuple):
        name = op[0]
        if name == "inc":
            if x == self.k:
                return x, x
            return x + 1, x
        if name == "cas":
            _, old, new = op
            if x != old or new not in range(self.k + 1):
                return x, False
            return new, True
        if name == "read":
            return x, x
        raise ValueError(f"bad CASCounter op {op!r}")


def seq_apply(k: int, x: int, op: tuple):
    return CasCounterSpec(k).apply(x, op)
