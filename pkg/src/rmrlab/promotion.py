"""Abortable promotion array APArray(k).

Each entry is a ``(status, seq)`` pair.  ``collect`` registers processes,
``update`` marks one as aborted unless it was already promoted, ``promote``
picks the lowest registered entry, ``remove`` aborts an entry
unconditionally and ``reset`` clears everything.

The concurrent version runs the sequential type inside a wait-free universal
construction.  ``update`` is the only operation invoked by arbitrary
processes, so it takes the slow path; everything else is issued by the unique
releaser of a node lock and takes the O(1) fast path.
"""

from __future__ import annotations

from dataclasses import dataclass

from .uc import UC
from .words import BOT

EMPTY = 0
REG = 1
PRO = 2
ABORT = 3


@dataclass(frozen=True)
class APArraySpec:
    k: int

    @property
    def initial(self):
        return ((EMPTY, BOT),) * self.k

    def _index(self, i):
        if not isinstance(i, int) or not 0 <= i < self.k:
            raise IndexError(f"entry {i!r} out of range for APArray({self.k})")
        return i

    def apply(self, A, op):
        name = op[0]
        if name == "collect":
            X = op[1]
            if len(X) != self.k:
                raise ValueError(f"collect expects {self.k} entries, got {len(X)}")
            return tuple(
                (REG, x) if v != ABORT and x is not BOT else (v, s)
                for (v, s), x in zip(A, X)
            ), None
        if name == "update":
            i = self._index(op[1])
            if A[i][0] == PRO:
                return A, False
            return _set(A, i, (ABORT, op[2])), True
        if name == "promote":
            for i, (v, s) in enumerate(A):
                if v == REG:
                    return _set(A, i, (PRO, s)), (i, s)
            return A, (BOT, BOT)
        if name == "remove":
            i = self._index(op[1])
            return _set(A, i, (ABORT, A[i][1])), None
        if name == "reset":
            return self.initial, None
        raise ValueError(f"bad APArray op {op!r}")


def _set(A, i, entry):
    return A[:i] + (entry,) + A[i + 1:]


class PromotionArray:
    """Concurrent APArray(k) over a wait-free universal construction."""

    def __init__(self, mem, k: int):
        self.k = k
        self.spec = APArraySpec(k)
        self.uc = UC(mem, self.spec, slots=k)

    # fast operations take the caller's pseudo-ID as their result slot

    def collect(self, X, caller: int = 0):
        yield from self.uc.perform_fast(("collect", tuple(X)), caller)

    def update(self, i, seq):
        ok = yield from self.uc.perform_slow(("update", i, seq), slot=i)
        return ok

    def promote(self, caller: int = 0):
        r = yield from self.uc.perform_fast(("promote",), caller)
        return r

    def remove(self, i, caller: int = 0):
        yield from self.uc.perform_fast(("remove", i), caller)

    def reset(self, caller: int = 0):
        yield from self.uc.perform_fast(("reset",), caller)
