"""Linearizability checking for small histories.

``check_linearizable`` is a Wing & Gong style search: repeatedly pick an
operation that is minimal in real-time order, apply it to the sequential
specification, and backtrack on mismatch.  Visited (linearized-set, state)
pairs are memoized.  ``brute_force_linearizable`` enumerates whole
permutations and is only meant as an oracle for tiny histories.
"""

from __future__ import annotations

import itertools
from typing import Any, Callable, NamedTuple

from ..words import FAIL

MAX_OPS = 16


class HistoryTooLarge(ValueError):
    pass


class Operation(NamedTuple):
    pid: int
    op: tuple
    result: Any
    inv: int
    res: int | None  # None while pending

    @property
    def pending(self) -> bool:
        return self.res is None


def is_failed_inc(o: Operation) -> bool:
    """A failed inc changes nothing and may be removed from the history."""
    return o.op[0] == "inc" and not o.pending and o.result is FAIL


def _prepare(history, removable):
    history = list(history)
    if removable is not None:
        history = [o for o in history if not removable(o)]
    if len(history) > MAX_OPS:
        raise HistoryTooLarge(f"{len(history)} operations; the search is exponential, limit is {MAX_OPS}")
    return history


def check_linearizable(history, spec, *, removable: Callable | None = is_failed_inc,
                       initial=None) -> bool:
    """True iff some linearization of ``history`` is legal for ``spec``.

    Pending operations may take effect with any result or not at all.
    ``removable`` filters out operations before checking.
    """
    ops = _prepare(history, removable)
    state0 = spec.initial if initial is None else initial
    n = len(ops)
    complete_mask = 0
    for idx, o in enumerate(ops):
        if not o.pending:
            complete_mask |= 1 << idx
    inf = float("inf")
    seen: set = set()

    def search(done: int, state) -> bool:
        if done & complete_mask == complete_mask:
            return True
        key = (done, state)
        if key in seen:
            return False
        seen.add(key)
        # an op may go next only if it was invoked before every remaining op responded
        horizon = min((ops[j].res for j in range(n) if not done >> j & 1 and not ops[j].pending), default=inf)
        for j in range(n):
            if done >> j & 1:
                continue
            o = ops[j]
            if o.inv > horizon:
                continue
            new_state, result = spec.apply(state, o.op)
            if not o.pending and result != o.result:
                continue
            if search(done | 1 << j, new_state):
                return True
        return False

    return search(0, state0)


def brute_force_linearizable(history, spec, *, initial=None) -> bool:
    """Try every ordering of every admissible subset.  Exponential; ≤ ~7 ops."""
    ops = list(history)
    state0 = spec.initial if initial is None else initial
    complete = [o for o in ops if not o.pending]
    pending = [o for o in ops if o.pending]
    for r in range(len(pending) + 1):
        for extra in itertools.combinations(pending, r):
            chosen = complete + list(extra)
            for perm in itertools.permutations(chosen):
                if not _respects_real_time(perm):
                    continue
                state = state0
                ok = True
                for o in perm:
                    state, result = spec.apply(state, o.op)
                    if not o.pending and result != o.result:
                        ok = False
                        break
                if ok:
                    return True
    return False


def _respects_real_time(seq) -> bool:
    for a_idx, a in enumerate(seq):
        for b in seq[a_idx + 1:]:
            # b before a in real time, but a placed first
            if b.res is not None and b.res < a.inv:
                return False
    return True
