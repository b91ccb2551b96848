import json

import pytest
from hypothesis import given, settings, strategies as st

from rmrlab.counter import RCasCounter
from rmrlab.harness.schedulers import RoundRobin, Scripted, UniformRandom
from rmrlab.sim import (
    AdversaryView, Cas, CellKind, ConfigurationError, Flip, Local, Machine, Read,
    SimulationFault, Trace, Write, is_rmr, new_machine, run,
)
from rmrlab.words import BOT, INF, decode, encode


def idle(pid):
    return
    yield


def steps(*effects):
    def program(pid):
        for eff in effects:
            yield eff
    return program


def test_new_machine_needs_a_process():
    with pytest.raises(ConfigurationError):
        new_machine(0)


def test_new_machine_single_idle_process():
    m = new_machine(1, [idle])
    assert m.finished
    assert run(m, RoundRobin(), 10).steps == 0


def test_alloc_cell_fresh_and_initialised():
    m = Machine(1)
    a = m.alloc_cell(CellKind.CAS, 0)
    b = m.alloc_cell(CellKind.REGISTER, (BOT, BOT))
    assert a != b
    assert m.value(a) == 0
    assert m.value(b) == (BOT, BOT)
    assert m.cells[a].version == 0


def test_alloc_while_running_is_refused():
    m = new_machine(1, [steps(Local("x"))])
    with pytest.raises(SimulationFault):
        m.alloc_cell("cas")


class TestAccounting:
    def test_is_rmr_rules(self):
        assert is_rmr("read", None, 0)
        assert not is_rmr("read", 3, 3)
        assert is_rmr("read", 2, 3)
        assert is_rmr("cas", 3, 3)
        assert is_rmr("write", None, 0)
        with pytest.raises(ValueError):
            is_rmr("swap", 0, 0)

    def test_read_cold_then_cached_then_invalidated(self):
        m = Machine(2)
        c = m.alloc_cell("register", 7)
        assert m.exec_read(0, c) == (7, True)
        assert m.exec_read(0, c) == (7, False)
        m.exec_write(1, c, 8)
        assert m.exec_read(0, c) == (8, True)

    def test_write_bumps_version_even_for_same_value(self):
        m = Machine(1)
        c = m.alloc_cell("register", 0)
        m.exec_write(0, c, (4, 3))
        m.exec_write(0, c, (4, 3))
        assert m.value(c) == (4, 3)
        assert m.cells[c].version == 2

    def test_cas_semantics_and_failed_cas_costs(self):
        m = Machine(1)
        c = m.alloc_cell("cas", 0)
        assert m.exec_cas(0, c, 0, 1) == (True, True)
        assert m.value(c) == 1
        m2 = Machine(1)
        d = m2.alloc_cell("cas", 2)
        assert m2.exec_cas(0, d, 1, 0) == (False, True)
        assert m2.value(d) == 2
        assert m2.cells[d].version == 0

    def test_kind_and_cell_faults(self):
        m = Machine(1)
        r = m.alloc_cell("register", 0)
        c = m.alloc_cell("cas", 0)
        with pytest.raises(SimulationFault):
            m.exec_write(0, c, 1)
        with pytest.raises(SimulationFault):
            m.exec_cas(0, r, 0, 1)
        with pytest.raises(SimulationFault):
            m.exec_read(0, 99)

    def test_flip_ranges(self):
        m = Machine(1, seed=5)
        assert all(m.flip(0, 1) == 0 for _ in range(20))
        assert {m.flip(0, 3) for _ in range(200)} == {0, 1, 2}
        with pytest.raises(SimulationFault):
            m.flip(0, 0)


def flip_then_cas(cell):
    def program(pid):
        v = yield Flip(3)
        yield Local("think")
        yield Cas(cell, 0, v)
    return program


def test_weak_adversary_hides_coin_until_next_shared_step():
    m = Machine(1, seed=1)
    c = m.alloc_cell("cas", 0)
    m.load([flip_then_cas(c)])
    view = AdversaryView(m)
    assert list(view.history()) == []
    m.step(0)
    assert view.coin_hidden(0)
    assert view.pending(0) is None
    assert [e["result"] for e in view.history()] == [None]
    m.step(0)  # a local step does not reveal
    assert view.coin_hidden(0)
    m.step(0)
    assert not view.coin_hidden(0)
    flips = [e for e in view.history() if e["effect"] == "flip"]
    assert flips[0]["result"] in (0, 1, 2)


def test_scheduler_choosing_finished_process_faults():
    m = new_machine(2, [idle, steps(Local("a"))])
    with pytest.raises(SimulationFault):
        run(m, Scripted([0]), 1)


def test_budget_zero_gives_empty_trace():
    m = Machine(1)
    c = m.alloc_cell("register", 0)
    m.load([steps(Write(c, 1))])
    trace = run(m, RoundRobin(), 0)
    assert trace.events == [] and trace.steps == 0


def test_solo_inc_trace_matches_hand_execution():
    # beta=0 against count=0: one flip, then CAS(0,1) succeeds and returns 0
    m = Machine(1, coins=lambda pid, k: 0)
    ctr = RCasCounter(m, 2)

    def program(pid):
        return (yield from ctr.inc())

    m.load([program])
    trace = run(m, RoundRobin(), 100)
    taken = [(e.effect, e.args, e.result, e.rmr) for e in trace.events if e.effect != "return"]
    assert taken == [("flip", (3,), 0, False), ("cas", (0, 1), True, True)]
    assert m.procs[0].result == 0
    assert m.value(ctr.count) == 1


def counter_workload(seed):
    m = Machine(3, seed=seed)
    ctr = RCasCounter(m, 2)

    def program(pid):
        for _ in range(4):
            yield from ctr.inc()
            yield from ctr.cas(2, 0)
            yield from ctr.read()

    m.load([program] * 3)
    return run(m, UniformRandom(seed), 10_000)


def test_same_seed_same_trace():
    a, b = counter_workload(11), counter_workload(11)
    assert a.to_jsonl() == b.to_jsonl()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_ledger_coherence_and_atomicity(seed):
    trace = counter_workload(seed)
    trace.check_ledger()
    last_change: dict = {}
    seen: dict = {}
    for e in trace.events:
        if e.cell is None:
            continue
        if e.effect == "read" and not e.rmr:
            # a free read means nobody touched the cell since our last access
            assert last_change.get(e.cell, -1) <= seen[(e.pid, e.cell)]
        if e.effect == "write" or (e.effect == "cas" and e.result):
            last_change[e.cell] = e.t
        seen[(e.pid, e.cell)] = e.t


def test_jsonl_round_trip():
    trace = counter_workload(3)
    trace.header = {"num_processes": 3}
    back = Trace.from_jsonl(trace.to_jsonl())
    assert back.events == trace.events
    assert back.rmrs == trace.rmrs
    assert back.header == trace.header
    first = trace.to_jsonl().splitlines()[1]
    assert {"t", "pid", "effect", "cell", "args", "result", "rmr"} <= set(json.loads(first))


@given(st.recursive(st.integers() | st.sampled_from([BOT, INF]), lambda xs: st.tuples(xs, xs), max_leaves=6))
def test_word_encoding_round_trip(w):
    assert decode(encode(w)) == w
