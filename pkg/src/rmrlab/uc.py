"""Universal constructions with one fast caller and many slow callers.

Any sequential type works as long as it exposes ``initial`` and a pure
``apply(state, op) -> (state, result)``.

``UCWeak`` is the lock-free construction: one main CAS cell holding
``(state, last fast result, fast count, slow count)`` plus one announce
register for the (single) fast caller.  ``perform_fast`` takes O(1) steps and
needs at most two calls to ``help``.

``UC`` makes the slow path wait-free by operation combining.  Every slow
caller owns an announce slot; the main record also carries a ``head`` cursor
and, per slot, the sequence number and result of the last operation served.
Each successful CAS on the main record serves the head slot and advances the
cursor, so an announced operation is applied within two sweeps of the cursor.

``UC`` also keeps each fast caller's last result in a per-slot field of the
main record, tagged with its sequence number.  A fast call may then start as
soon as the previous one has taken effect, even if the previous caller has
not yet read its result back.  The node lock needs this: a pawn that learns
of its promotion through its own ``update`` can start releasing before its
promoter's ``promote`` call returns.
"""

from __future__ import annotations

from .sim import Cas, CellKind, Note, Read, Write
from .words import BOT


class UCWeak:
    def __init__(self, mem, spec):
        self.spec = spec
        self.m_reg = mem.alloc_cell(CellKind.CAS, (spec.initial, BOT, 0, 0))
        self.s_reg = mem.alloc_cell(CellKind.REGISTER, (BOT, 0))
        self.uid = self.m_reg

    def apply_op(self, state, op):
        return self.spec.apply(state, op)

    def perform_fast(self, op):
        yield Note("fast", (self.uid, "begin"))
        m = yield Read(self.m_reg)
        seq = m[2] + 1
        yield Write(self.s_reg, (op, seq))
        helps = 1
        ok = yield from self.help()
        if not ok:
            helps = 2
            yield from self.help()
        m = yield Read(self.m_reg)
        yield Note("fast", (self.uid, "end", helps, m[2] >= seq))
        return m[1]

    def help(self):
        m = yield Read(self.m_reg)
        s1, r1, fc, sc = m
        op, seq = yield Read(self.s_reg)
        if fc >= seq:
            return True
        s2, r2 = self.apply_op(s1, op)
        ok = yield Cas(self.m_reg, m, (s2, r2, seq, sc))
        return ok

    def perform_slow(self, op):
        while True:
            m = yield Read(self.m_reg)
            s1, r1, fc, sc = m
            s2, r2 = self.apply_op(s1, op)
            if s2 == s1:
                return r2
            yield from self.help()
            ok = yield Cas(self.m_reg, m, (s2, r1, fc, sc + 1))
            if ok:
                return r2

    perform_slow_weak = perform_slow


class UC(UCWeak):
    def __init__(self, mem, spec, slots: int):
        if slots < 1:
            raise ValueError("need at least one slow slot")
        self.spec = spec
        self.slots = slots
        empty = ((0, BOT),) * slots
        init = (spec.initial, BOT, 0, 0, 0, empty, empty)
        self.m_reg = mem.alloc_cell(CellKind.CAS, init)
        self.s_reg = mem.alloc_cell(CellKind.REGISTER, (BOT, 0, 0))
        self.announce = [mem.alloc_cell(CellKind.REGISTER, (BOT, 0)) for _ in range(slots)]
        self.uid = self.m_reg

    def _serve(self, state, head, done, ann):
        op, seq = ann
        if seq > done[head][0]:
            state, res = self.apply_op(state, op)
            done = done[:head] + ((seq, res),) + done[head + 1:]
        return state, (head + 1) % self.slots, done

    def perform_fast(self, op, slot: int = 0):
        if not 0 <= slot < self.slots:
            raise IndexError(f"slot {slot} out of range")
        yield Note("fast", (self.uid, "begin"))
        m = yield Read(self.m_reg)
        seq = m[2] + 1
        yield Write(self.s_reg, (op, seq, slot))
        helps = 1
        ok = yield from self.help()
        if not ok:
            helps = 2
            yield from self.help()
        m = yield Read(self.m_reg)
        fseq, res = m[6][slot]
        yield Note("fast", (self.uid, "end", helps, fseq == seq))
        return res

    def help(self):
        m = yield Read(self.m_reg)
        s1, r1, fc, sc, head, done, fres = m
        op, seq, fslot = yield Read(self.s_reg)
        if fc >= seq:
            return True
        s2, r2 = self.apply_op(s1, op)
        fres = fres[:fslot] + ((seq, r2),) + fres[fslot + 1:]
        ann = yield Read(self.announce[head])
        s3, head, done = self._serve(s2, head, done, ann)
        ok = yield Cas(self.m_reg, m, (s3, r2, seq, sc, head, done, fres))
        return ok

    def perform_slow(self, op, slot: int):
        if not 0 <= slot < self.slots:
            raise IndexError(f"slot {slot} out of range")
        yield Note("slow", (self.uid, "begin"))
        prev = yield Read(self.announce[slot])
        seq = prev[1] + 1
        yield Write(self.announce[slot], (op, seq))
        while True:
            m = yield Read(self.m_reg)
            s1, r1, fc, sc, head, done, fres = m
            if done[slot][0] == seq:
                yield Note("slow", (self.uid, "end"))
                return done[slot][1]
            yield from self.help()
            ann = yield Read(self.announce[head])
            s2, head, done = self._serve(s1, head, done, ann)
            yield Cas(self.m_reg, m, (s2, r1, fc, sc + 1, head, done, fres))

    def perform_slow_weak(self, op):
        while True:
            m = yield Read(self.m_reg)
            s1, r1, fc, sc, head, done, fres = m
            s2, r2 = self.apply_op(s1, op)
            if s2 == s1:
                return r2
            yield from self.help()
            ok = yield Cas(self.m_reg, m, (s2, r1, fc, sc + 1, head, done, fres))
            if ok:
                return r2
