import pytest

from rmrlab.harness.schedulers import RoundRobin
from rmrlab.sim import Machine, run


def coin_script(*values, then=None):
    """Coins popped in order; afterwards ``then`` (or a fault if None)."""
    queue = list(values)

    def coins(pid, m):
        if queue:
            return queue.pop(0)
        if then is None:
            raise AssertionError("coin script exhausted")
        return then
    return coins


def solo(call, *, coins=None, seed=0, setup=None):
    """Run one generator-returning ``call(obj)`` alone; returns (result, machine, obj)."""
    m = Machine(1, seed, coins=coins)
    obj = setup(m) if setup else None

    def program(pid):
        return (yield from call(obj))

    m.load([program])
    run(m, RoundRobin(), 100_000)
    assert m.finished
    return m.procs[0].result, m, obj


def finish(m, pid, limit=10_000):
    for _ in range(limit):
        if m.procs[pid].done:
            return m.procs[pid].result
        m.step(pid)
    raise AssertionError(f"p{pid} did not finish within {limit} steps")


def step_until(m, pid, cond, limit=10_000):
    for _ in range(limit):
        if cond():
            return
        m.step(pid)
    raise AssertionError(f"condition not reached by p{pid}")


def rmrs_between(trace, pid, start_tag, end_tag):
    """RMRs charged to ``pid`` between two of its notes (first occurrences)."""
    marks = {}
    for e in trace.notes():
        if e.pid == pid and e.args[0] in (start_tag, end_tag) and e.args[0] not in marks:
            marks[e.args[0]] = e.result
    return marks[end_tag] - marks[start_tag]


@pytest.fixture
def machine():
    return Machine(1)
