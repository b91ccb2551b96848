"""Runtime safety monitor fed by the ``Note`` effects the algorithms emit.

The monitor's safety state is small and can be snapshotted, which lets the
model checker carry it along with machine states.  Statistics (help counts,
slow-path step counts) live outside the snapshot.
"""

from __future__ import annotations

from ..nodelock import FREE, KING, PPAWN, QUEEN
from ..words import BOT, INF, is_int


class Violation(Exception):
    def __init__(self, kind: str, detail: str):
        super().__init__(f"{kind}: {detail}")
        self.kind = kind
        self.detail = detail


UNIQUE_ROLES = (KING, QUEEN, PPAWN)


class SafetyMonitor:
    def __init__(self, capacities: dict[int, int] | None = None, check_roles: bool = True):
        # node-lock uid -> number of pseudo-IDs
        self.capacities = dict(capacities or {})
        # node-lock uid -> apply cells, for the deregistration check
        self.apply_cells: dict[int, list[int]] = {}
        self.check_roles = check_roles
        self.cs: dict = {}
        self.roles: dict = {}
        self.fast: dict = {}
        self.inside: dict = {}
        # (uid, j) -> pids whose lock calls were open when j was handed over
        self.given: dict = {}
        self.owed: dict = {}
        self.max_helps = 0
        self.slow_steps: list[int] = []
        self.fast_steps: list[int] = []
        self._started: dict = {}

    # -- snapshots

    def snapshot(self):
        return (
            tuple(sorted(self.cs.items())),
            tuple(sorted(self.roles.items())),
            tuple(sorted(self.fast.items())),
            tuple(sorted(self.inside.items())),
            tuple(sorted(self.given.items())),
            tuple(sorted(self.owed.items())),
        )

    def restore(self, snap) -> None:
        cs, roles, fast, inside, given, owed = snap
        self.cs = dict(cs)
        self.roles = dict(roles)
        self.fast = dict(fast)
        self.inside = dict(inside)
        self.given = dict(given)
        self.owed = dict(owed)

    # -- events

    def on_note(self, pid, note, machine) -> None:
        handler = getattr(self, "_on_" + note.tag, None)
        if handler is not None:
            handler(pid, note.data, machine)

    def _on_cs(self, pid, data, machine):
        lock_id, what = data
        if what == "enter":
            holder = self.cs.get(lock_id)
            if holder is not None:
                raise Violation("mutual-exclusion", f"p{pid} entered {lock_id} while p{holder} is inside")
            self.cs[lock_id] = pid
        else:
            if self.cs.get(lock_id) != pid:
                raise Violation("mutual-exclusion", f"p{pid} left {lock_id} without holding it")
            del self.cs[lock_id]

    def _enter(self, pid, uid, what):
        cap = self.capacities.get(uid)
        if cap is not None:
            count = sum(1 for (u, _) in self.inside if u == uid)
            if count + 1 > cap + 1:
                raise Violation("accessors", f"more than {cap + 1} processes inside node {uid}")
        self.inside[(uid, pid)] = what

    def _on_lock_begin(self, pid, data, machine):
        uid, i = data
        for (u, q), what in self.inside.items():
            if u == uid and what == ("lock", i):
                raise Violation("pseudo-id", f"p{pid} and p{q} both lock node {uid} as {i}")
        self._enter(pid, uid, ("lock", i))

    def _on_lock_end(self, pid, data, machine):
        uid, i, val = data
        self.inside.pop((uid, pid), None)
        if is_int(val) and pid in self.given.get((uid, val), ()):
            del self.given[(uid, val)]
            return
        for key, pids in list(self.given.items()):
            if key[0] == uid and pid in pids:
                rest = tuple(q for q in pids if q != pid)
                if not rest:
                    raise Violation("handover", f"hand-over {key[1]} at node {uid} can no longer be received")
                self.given[key] = rest
        if val is BOT:
            self.roles.pop((uid, i), None)
            return
        if val is INF:
            return
        if not is_int(val):
            raise Violation("handover", f"node {uid} lock returned {val!r}")
        for (u, q), what in sorted(self.inside.items()):
            if u == uid and what[0] == "release" and what[2] == val and (uid, q) not in self.owed:
                self.owed[(uid, q)] = val
                return
        raise Violation("handover", f"p{pid} received {val} at node {uid} with no matching release")

    def _on_role(self, pid, data, machine):
        # roles belong to pseudo-IDs: a hand-over passes them on to another process
        uid, i, r = data
        if self.check_roles and r in UNIQUE_ROLES:
            for (u, k), other in self.roles.items():
                if u == uid and k != i and other == r:
                    raise Violation("role", f"pseudo-IDs {i} and {k} both hold role {r} at node {uid}")
        self.roles[(uid, i)] = r

    def _on_cycle_end(self, pid, uid, machine):
        # the counter is back at 0, so every role of the cycle has been given up
        self.roles = {k: r for k, r in self.roles.items() if k[0] != uid}

    def _on_release_begin(self, pid, data, machine):
        uid, i, j = data
        self.roles.pop((uid, i), None)
        self._enter(pid, uid, ("release", i, j))

    def _on_release_end(self, pid, data, machine):
        uid, i, j, r = data
        self.inside.pop((uid, pid), None)
        cells = self.apply_cells.get(uid)
        if cells is not None and machine.value(cells[i]) != FREE:
            raise Violation("deregistration", f"p{pid} left release of node {uid} with apply[{i}] still set")
        owed = self.owed.pop((uid, pid), None)
        if r:
            if owed is not None:
                if owed != j:
                    raise Violation("handover", f"node {uid}: released {j} but {owed} was received")
                return
            waiting = tuple(sorted(q for (u, q), what in self.inside.items() if u == uid and what[0] == "lock"))
            if not waiting:
                raise Violation("handover", f"p{pid} handed over {j} at node {uid} with no concurrent lock")
            if (uid, j) in self.given:
                raise Violation("handover", f"node {uid}: value {j} handed over twice")
            self.given[(uid, j)] = waiting
        elif owed is not None:
            raise Violation("handover", f"p{pid}'s release returned False yet {owed} was received")

    def _on_fast(self, pid, data, machine):
        uid, what = data[0], data[1]
        flight = self.fast.get(uid, ())
        if what == "begin":
            # an earlier fast call may still be reading its result, but it must have taken effect
            fc = machine.value(uid)[2]
            for q, fc0 in flight:
                if fc < fc0 + 1:
                    raise Violation("fast-path", f"p{pid} and p{q} in performFast on {uid}")
            self.fast[uid] = flight + ((pid, fc),)
            self._started[("fast", uid, pid)] = machine.procs[pid].steps
        else:
            _, _, helps, applied = data
            rest = tuple(e for e in flight if e[0] != pid)
            if rest:
                self.fast[uid] = rest
            else:
                self.fast.pop(uid, None)
            self.max_helps = max(self.max_helps, helps)
            if helps > 2 or not applied:
                raise Violation("fast-path", f"fast op on {uid} not applied after {helps} helps")
            start = self._started.pop(("fast", uid, pid), None)
            if start is not None:
                self.fast_steps.append(machine.procs[pid].steps - start)

    def _on_slow(self, pid, data, machine):
        uid, what = data
        key = ("slow", uid, pid)
        if what == "begin":
            self._started[key] = machine.procs[pid].steps
        else:
            start = self._started.pop(key, None)
            if start is not None:
                self.slow_steps.append(machine.procs[pid].steps - start)

    def finish(self) -> None:
        """End-of-run checks."""
        if self.given:
            raise Violation("handover", f"hand-overs never received: {sorted(self.given)}")
        if self.owed:
            raise Violation("handover", f"received hand-overs from releases still open: {sorted(self.owed)}")
