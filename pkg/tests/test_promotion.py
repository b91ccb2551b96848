import pytest
from hypothesis import given, settings, strategies as st

from rmrlab.harness.experiment import ExperimentConfig, extract_history, run_random
from rmrlab.harness.linearize import check_linearizable
from rmrlab.promotion import ABORT, EMPTY, PRO, REG, APArraySpec, PromotionArray
from rmrlab.words import BOT

from conftest import solo

S3 = APArraySpec(3)
INIT = S3.initial


def test_collect_registers_given_entries():
    A, _ = S3.apply(INIT, ("collect", (5, BOT, 7)))
    assert A == ((REG, 5), (EMPTY, BOT), (REG, 7))


def test_collect_skips_aborted_entries():
    A = ((EMPTY, BOT), (ABORT, 4), (EMPTY, BOT))
    assert S3.apply(A, ("collect", (BOT, 9, BOT)))[0] == A


def test_collect_all_bot_is_identity():
    A = ((REG, 1), (PRO, 2), (ABORT, 3))
    assert S3.apply(A, ("collect", (BOT, BOT, BOT)))[0] == A


def test_collect_wrong_length():
    with pytest.raises(ValueError):
        S3.apply(INIT, ("collect", (1, 2)))


def test_update():
    A = ((EMPTY, BOT), (PRO, 4), (EMPTY, BOT))
    assert S3.apply(A, ("update", 1, 9)) == (A, False)
    B = ((REG, 5), (EMPTY, BOT), (EMPTY, BOT))
    assert S3.apply(B, ("update", 0, 5)) == (((ABORT, 5), (EMPTY, BOT), (EMPTY, BOT)), True)
    assert S3.apply(INIT, ("update", 2, 1))[1] is True
    with pytest.raises(IndexError):
        S3.apply(INIT, ("update", 3, 1))


def test_promote_lowest_registered():
    assert S3.apply(INIT, ("promote",)) == (INIT, (BOT, BOT))
    A = ((EMPTY, BOT), (REG, 3), (REG, 8))
    B, r = S3.apply(A, ("promote",))
    assert r == (1, 3)
    assert B == ((EMPTY, BOT), (PRO, 3), (REG, 8))
    aborted = ((ABORT, 1),) * 3
    assert S3.apply(aborted, ("promote",)) == (aborted, (BOT, BOT))


@pytest.mark.parametrize("entry,after", [((REG, 5), (ABORT, 5)), ((PRO, 5), (ABORT, 5)), ((EMPTY, BOT), (ABORT, BOT))])
def test_remove_is_unconditional(entry, after):
    A = (entry, (EMPTY, BOT), (EMPTY, BOT))
    assert S3.apply(A, ("remove", 0))[0][0] == after
    with pytest.raises(IndexError):
        S3.apply(A, ("remove", -1))


def test_reset():
    A = ((REG, 1), (PRO, 2), (ABORT, 3))
    once, _ = S3.apply(A, ("reset",))
    assert once == INIT
    assert S3.apply(once, ("reset",))[0] == INIT
    assert S3.apply(once, ("promote",))[1] == (BOT, BOT)


ENTRY = st.tuples(st.sampled_from([EMPTY, REG, PRO, ABORT]), st.integers(1, 9) | st.just(BOT))
OP = st.one_of(
    st.tuples(st.just("collect"), st.tuples(*[st.integers(1, 9) | st.just(BOT)] * 3)),
    st.tuples(st.just("update"), st.integers(0, 2), st.integers(1, 9)),
    st.just(("promote",)),
    st.tuples(st.just("remove"), st.integers(0, 2)),
)


@given(st.tuples(ENTRY, ENTRY, ENTRY), st.lists(OP, max_size=12))
def test_promoted_and_aborted_entries_are_sticky(A, ops):
    for op in ops:
        B, r = S3.apply(A, op)
        for i in range(3):
            if A[i][0] == PRO and op[0] not in ("remove", "collect"):
                assert B[i] == A[i]
            if A[i][0] == ABORT:
                assert B[i][0] == ABORT
        if op[0] == "update" and A[op[1]][0] == PRO:
            assert r is False
        A = B


def test_collect_guard_protects_only_aborted_entries():
    # a promoted entry is overwritten; the node lock never collects after promoting within a cycle
    A = ((PRO, 2), (ABORT, 3), (REG, 4))
    assert S3.apply(A, ("collect", (6, 6, 6)))[0] == ((REG, 6), (ABORT, 3), (REG, 6))


def test_concurrent_instance_fast_path_is_constant_steps():
    def ops(pa):
        yield from pa.collect((5, BOT, 7))
        r = yield from pa.promote()
        yield from pa.remove(0)
        yield from pa.reset()
        return r
    r, m, pa = solo(ops, setup=lambda m: PromotionArray(m, 3))
    assert r == (0, 5)
    assert m.value(pa.uc.m_reg)[0] == INIT


def test_update_takes_slow_path():
    def ops(pa):
        return (yield from pa.update(1, 4))
    r, m, pa = solo(ops, setup=lambda m: PromotionArray(m, 3))
    assert r is True
    assert [e.args[1][1] for e in m.trace.notes("slow")] == ["begin", "end"]


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 4))
def test_concurrent_histories_linearizable(seed, n):
    report = run_random(ExperimentConfig(object="promotion_array", size=3, processes=n, ops_per_process=3,
                                         seed=seed, scheduler={"kind": "uniform_random", "seed": seed}))
    assert report.status == "pass", report.violation
    assert check_linearizable(extract_history(report.trace), S3, removable=None)
