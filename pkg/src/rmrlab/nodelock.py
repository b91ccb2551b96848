"""ARMLockArray(n): the array-based randomized abortable lock.

Processes enter through a pseudo-ID ``i`` in ``0..n-1`` and obtain a role by
incrementing a randomized counter bounded by 2.  Incrementing 0 makes the
caller KING (it owns the lock), 1 makes it QUEEN (it waits for the king's
hand-over through ``X``), and observing 2 makes it a PAWN that waits to be
promoted from the promotion array.  On release the king either resets the
counter or hands the lock over to the queen, and the last of king and queen
to finish promotes one registered pawn; promoted pawns pass the lock on in
the same way until none is left and the counter returns to 0.

Abort signals are acted upon only inside the three await loops.

Lock methods are generators meant to be driven by :mod:`rmrlab.sim` or
:mod:`rmrlab.harness.native`.
"""

from __future__ import annotations

from .counter import RCasCounter
from .promotion import PromotionArray
from .sim import AbortPoll, Cas, CellKind, Note, Read, SimulationFault, Write
from .words import BOT, INF

KING, QUEEN, PAWN, PPAWN, WANT, OK = 0, 1, 2, 3, 4, 5
ROLE_NAMES = {KING: "king", QUEEN: "queen", PAWN: "pawn", PPAWN: "ppawn"}

FREE = (BOT, BOT)

#: deliberately broken variants, used to check that the checkers catch bugs
FAULTS = frozenset({"skip_ctr_reset", "skip_deregister"})


class NodeLock:
    def __init__(self, mem, n: int, faults=frozenset()):
        if n < 1:
            raise ValueError("node lock needs at least one pseudo-ID")
        unknown = set(faults) - FAULTS
        if unknown:
            raise ValueError(f"unknown faults {sorted(unknown)}")
        self.n = n
        self.faults = frozenset(faults)
        self.ctr = RCasCounter(mem, 2)
        self.pawn_set = PromotionArray(mem, n)
        self.apply = [mem.alloc_cell(CellKind.CAS, FREE) for _ in range(n)]
        self.role = [mem.alloc_cell(CellKind.REGISTER, BOT) for _ in range(n)]
        self.x = mem.alloc_cell(CellKind.CAS, BOT)
        self.lsync = mem.alloc_cell(CellKind.CAS, BOT)
        # lock(i) calls are sequential per i, so a plain register per slot is enough
        self.seqno = [mem.alloc_cell(CellKind.REGISTER, 0) for _ in range(n)]
        self.uid = self.ctr.count

    def _slot(self, i):
        if not isinstance(i, int) or not 0 <= i < self.n:
            raise SimulationFault(f"pseudo-ID {i!r} out of range for n={self.n}")
        return i

    def get_sequence_no(self, i):
        k = yield Read(self.seqno[i])
        yield Write(self.seqno[i], k + 1)
        return k + 1

    def lock(self, i):
        self._slot(i)
        yield Note("lock_begin", (self.uid, i))
        val = yield from self._lock(i)
        yield Note("lock_end", (self.uid, i, val))
        return val

    def _lock(self, i):
        s = yield from self.get_sequence_no(i)
        while True:
            ok = yield Cas(self.apply[i], FREE, (WANT, s), spin=True)
            if ok:
                break
            if (yield AbortPoll()):
                val = yield from self.abort(i, s, False, BOT)
                return val
        while True:
            r = yield from self.ctr.inc()
            yield Write(self.role[i], r)
            if r == PAWN:
                while True:
                    a = yield Read(self.apply[i], spin=True)
                    if a == (OK, s):
                        break
                    c = yield Read(self.ctr.count, spin=True)
                    if c != 2:
                        break
                    if (yield AbortPoll()):
                        val = yield from self.abort(i, s, True, r)
                        return val
                a = yield Read(self.apply[i])
                if a == (OK, s):
                    r = PPAWN
                    yield Write(self.role[i], r)
            if r in (KING, QUEEN, PPAWN):
                break
        yield Note("role", (self.uid, i, r))
        if r == QUEEN:
            while True:
                xv = yield Read(self.x, spin=True)
                if xv is not BOT:
                    break
                if (yield AbortPoll()):
                    val = yield from self.abort(i, s, True, r)
                    return val
        yield Cas(self.apply[i], (WANT, s), (OK, s))
        if r == QUEEN:
            xv = yield Read(self.x)
            return xv
        return INF

    def abort(self, i, s, flag, r):
        if not flag:
            return BOT
        yield Cas(self.apply[i], (WANT, s), (OK, s))
        if r == PAWN:
            ok = yield from self.pawn_set.update(i, s)
            if not ok:
                yield Write(self.role[i], PPAWN)
                yield Note("role", (self.uid, i, PPAWN))
                return INF
        else:
            ok = yield Cas(self.x, BOT, INF)
            if not ok:
                xv = yield Read(self.x)
                return xv
            yield from self.do_collect(i)
            yield from self.help_release(i)
        yield Cas(self.apply[i], (OK, s), FREE)
        return BOT

    def release(self, i, j):
        self._slot(i)
        yield Note("release_begin", (self.uid, i, j))
        r = False
        role = yield Read(self.role[i])
        if role not in (KING, QUEEN, PPAWN):
            raise SimulationFault(f"release by pseudo-ID {i} holding role {role!r}")
        if role == KING:
            if "skip_ctr_reset" in self.faults:
                reset = False
            else:
                reset = yield from self.ctr.cas(1, 0)
                if reset:
                    yield Note("cycle_end", self.uid)
            if not reset:
                r = yield Cas(self.x, BOT, j)
                if r:
                    yield from self.do_collect(i)
                yield from self.help_release(i)
        elif role == QUEEN:
            yield from self.help_release(i)
        else:
            yield from self.do_promote(i)
        _, s = yield Read(self.apply[i])
        if "skip_deregister" not in self.faults:
            yield Cas(self.apply[i], (OK, s), FREE)
        yield Note("release_end", (self.uid, i, j, r))
        return r

    def do_collect(self, i):
        A = [BOT] * self.n
        for k in range(self.n):
            val, seq = yield Read(self.apply[k])
            if val == WANT:
                A[k] = seq
        yield from self.pawn_set.collect(A, i)

    def help_release(self, i):
        ok = yield Cas(self.lsync, BOT, i)
        if ok:
            return
        j = yield Read(self.x)
        yield Cas(self.x, j, BOT)
        j = yield Read(self.lsync)
        yield Cas(self.lsync, j, BOT)
        yield from self.pawn_set.remove(j, i)
        yield from self.do_promote(i)

    def do_promote(self, i):
        yield from self.pawn_set.remove(i, i)
        j, seq = yield from self.pawn_set.promote(i)
        if j is BOT:
            yield from self.pawn_set.reset(i)
            if (yield from self.ctr.cas(2, 0)):
                yield Note("cycle_end", self.uid)
        else:
            yield Cas(self.apply[j], (WANT, seq), (OK, seq))
