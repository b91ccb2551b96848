"""Client programs that exercise each object under test.

Clients bracket every operation with ``op`` notes (for history extraction)
and every lock passage with ``passage`` notes (for metrics).  The critical
section is one scheduled ``Local`` step between two ``cs`` notes, so an
overlap is always observable by the monitor.  Lock clients also take one
``Local`` step in the remainder section before each passage, so the
scheduler decides when each lock call is invoked.
"""

from __future__ import annotations

from ..sim import Local, Note
from ..words import BOT


def op_client(call, ops):
    """``call(pid, op)`` returns the generator performing ``op``."""

    def program(pid):
        for op in ops[pid]:
            yield Note("op", ("inv", op))
            res = yield from call(pid, op)
            yield Note("op", ("res", res))

    return program


def counter_call(counter):
    def call(pid, op):
        if op[0] == "inc":
            r = yield from counter.inc()
        elif op[0] == "cas":
            r = yield from counter.cas(op[1], op[2])
        else:
            r = yield from counter.read()
        return r

    return call


def critical_section(lock_id):
    yield Note("cs", (lock_id, "enter"))
    yield Local("cs")
    yield Note("cs", (lock_id, "exit"))


def release_label(pid: int, passage: int) -> int:
    """A distinct hand-over value for every release call of a node-lock client."""
    return 1000 * (pid + 1) + passage


def node_lock_client(lock, passages: int, slot_of=None):
    def program(pid):
        slot = pid if slot_of is None else slot_of(pid)
        for k in range(passages):
            yield Local("remainder")
            yield Note("passage", "begin")
            val = yield from lock.lock(slot)
            if val is not BOT:
                yield from critical_section(lock.uid)
                yield from lock.release(slot, release_label(pid, k))
            yield Note("passage", ("end", val))

    return program


def tree_lock_client(tree, passages: int, leaves):
    lock_id = ("tree", tree.root.uid)

    def program(pid):
        leaf = leaves[pid]
        for _ in range(passages):
            yield Local("remainder")
            yield Note("passage", "begin")
            val = yield from tree.lock(leaf)
            if val is not BOT:
                yield from critical_section(lock_id)
                yield from tree.release(leaf)
            yield Note("passage", ("end", val))

    return program
