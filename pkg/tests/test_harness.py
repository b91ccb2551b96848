import csv
import io
import json

import pytest

from rmrlab.harness.aborts import make_abort_policy
from rmrlab.harness.experiment import ExperimentConfig, extract_passages, replay_trace, run_random
from rmrlab.harness.report import CSV_COLUMNS, emit_report, load_report, render_report
from rmrlab.harness.schedulers import (
    InvalidationGreedy, LongestWaitingFirst, RoundRobin, UniformRandom, make_scheduler,
)
from rmrlab.sim import AdversaryView, ConfigurationError, Local, Machine, Read, Trace, Write, run
from rmrlab.words import BOT, INF


def locals_only(k):
    def program(pid):
        for _ in range(k):
            yield Local("x")
    return program


def schedule_of(scheduler, n=3, k=3):
    m = Machine(n)
    m.load([locals_only(k)] * n)
    return run(m, scheduler, 1000).schedule()


class TestSchedulers:
    def test_round_robin(self):
        assert schedule_of(RoundRobin()) == [0, 1, 2] * 3

    def test_uniform_random_is_seeded(self):
        assert schedule_of(UniformRandom(4)) == schedule_of(UniformRandom(4))
        assert sorted(schedule_of(UniformRandom(4))) == sorted([0, 1, 2] * 3)

    def test_longest_waiting_first_rotates(self):
        assert schedule_of(LongestWaitingFirst()) == [0, 1, 2] * 3

    def test_invalidation_greedy_prefers_writers_of_shared_lines(self):
        m = Machine(2)
        c = m.alloc_cell("register", 0)

        def reader(pid):
            while True:
                v = yield Read(c, True)
                if v:
                    return

        def writer(pid):
            yield Local("a")
            yield Write(c, 1)

        m.load([reader, writer])
        m.step(0)  # reader caches the line
        m.step(1)  # writer now has a pending write to a cached line
        assert InvalidationGreedy(0).choose(AdversaryView(m)) == 1

    def test_kinds(self):
        for kind in ("round_robin", "uniform_random", "longest_waiting_first", "invalidation_greedy"):
            make_scheduler({"kind": kind, "seed": 1})
        with pytest.raises(ConfigurationError):
            make_scheduler({"kind": "exhaustive_dfs", "depth_bound": 5})
        with pytest.raises(ConfigurationError):
            make_scheduler({"kind": "oracle"})


def node_cfg(**kw):
    base = dict(object="node_lock", size=3, processes=3, passages=3, seed=2)
    base.update(kw)
    return ExperimentConfig(**base)


class TestAborts:
    def test_unknown_policy(self):
        with pytest.raises(ConfigurationError):
            make_abort_policy({"kind": "sometimes"})

    def test_never(self):
        rep = run_random(node_cfg())
        assert not any(p["aborted"] for p in rep.completed)
        assert not [e for e in rep.trace.events if e.effect == "signal"]

    def test_at_step_is_recorded(self):
        rep = run_random(node_cfg(aborts={"kind": "at_step", "t": 5, "pid": 1}))
        sigs = [e for e in rep.trace.events if e.effect == "signal"]
        assert [(e.pid, e.args) for e in sigs] == [(1, ("step", 5))]

    def test_every_waiter_aborts_at_probability_one(self):
        rep = run_random(node_cfg(passages=5, aborts={"kind": "per_await_probability", "p": 1.0, "seed": 0},
                                  scheduler={"kind": "uniform_random", "seed": 9}))
        assert rep.status == "pass"
        waited = 0
        for p in rep.completed:
            if p["signal_rmr"] is not None:
                waited += 1
                # a signalled waiter either aborts or had already been handed the lock
                assert p["aborted"] or p["returned"] is not BOT
        assert waited > 0
        assert any(p["aborted"] for p in rep.completed)

    def test_all_but_one_spares_the_kept_process(self):
        rep = run_random(node_cfg(passages=4, aborts={"kind": "all_but_one", "keep": 0}))
        assert rep.status == "pass"
        assert not any(p["aborted"] for p in rep.completed if p["pid"] == 0)
        assert all(p["signal_rmr"] is not None for p in rep.completed if p["pid"] != 0)


class TestRunRandom:
    def test_tree_report(self):
        rep = run_random(ExperimentConfig(object="tree_lock", size=9, delta=3, processes=4, passages=10,
                                          scheduler={"kind": "uniform_random", "seed": 1}))
        assert rep.status == "pass"
        assert len(rep.completed) == 40
        assert rep.mean_rmrs() > 0
        rep.trace.check_ledger()

    def test_solo_node_lock_constant_rmrs(self):
        rep = run_random(node_cfg(size=2, processes=1, passages=6), coins=lambda pid, m: 0)
        assert [p["returned"] for p in rep.completed] == [INF] * 6
        assert len({p["rmrs"] for p in rep.completed[1:]}) == 1

    def test_budget_exhaustion_is_not_a_failure_for_unfair_schedulers(self):
        rep = run_random(node_cfg(step_budget=10, scheduler={"kind": "uniform_random"}))
        assert rep.status == "budget_exhausted"

    def test_fair_scheduler_starvation_is_a_violation(self):
        rep = run_random(node_cfg(step_budget=10, scheduler={"kind": "round_robin"}))
        assert rep.status == "violation" and rep.violation[0] == "starvation"

    def test_fault_mutant_is_caught(self):
        rep = run_random(node_cfg(faults=["skip_deregister"]))
        assert rep.status == "violation"

    def test_config_round_trip_and_validation(self, tmp_path):
        cfg = node_cfg(aborts={"kind": "at_step", "t": 3, "pid": 0})
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert ExperimentConfig.load(path) == cfg
        assert ExperimentConfig.load(path).config_hash() == cfg.config_hash()
        with pytest.raises(ConfigurationError):
            ExperimentConfig(object="queue")
        with pytest.raises(ConfigurationError):
            ExperimentConfig(object="node_lock", size=2, processes=3)

    def test_replay_reproduces_trace(self):
        rep = run_random(node_cfg(aborts={"kind": "per_await_probability", "p": 0.3, "seed": 1}))
        again, identical = replay_trace(rep.trace)
        assert identical
        assert again.passages == rep.passages

    def test_passage_records_from_round_tripped_trace(self):
        rep = run_random(node_cfg())
        back = Trace.from_jsonl(rep.trace.to_jsonl())
        assert extract_passages(back) == rep.passages


class TestReports:
    def test_empty_csv_is_header_only(self):
        rep = run_random(ExperimentConfig(object="rcas_counter", size=2, processes=2))
        assert render_report(rep, "csv") == ",".join(CSV_COLUMNS) + "\n"

    def test_csv_columns_and_rows(self):
        rep = run_random(ExperimentConfig(object="tree_lock", size=9, processes=3, passages=2))
        rows = list(csv.DictReader(io.StringIO(render_report(rep, "csv"))))
        assert len(rows) == 6
        assert tuple(rows[0]) == CSV_COLUMNS
        assert {r["delta"] for r in rows} == {"3"} and {r["N"] for r in rows} == {"9"}
        assert sum(int(r["rmrs"]) for r in rows) == sum(p["rmrs"] for p in rep.completed)

    def test_identical_runs_give_identical_bytes(self, tmp_path):
        cfg = node_cfg(aborts={"kind": "per_await_probability", "p": 0.2, "seed": 5})
        for fmt in ("csv", "json_lines"):
            a = emit_report(run_random(cfg), fmt, tmp_path / f"a.{fmt}").read_bytes()
            b = emit_report(run_random(cfg), fmt, tmp_path / f"b.{fmt}").read_bytes()
            assert a == b

    def test_json_lines_round_trip(self, tmp_path):
        reps = [run_random(node_cfg(seed=s)) for s in (1, 2)]
        runs = load_report(emit_report(reps, "json_lines", tmp_path / "r.jsonl"))
        assert len(runs) == 2
        for run_, rep in zip(runs, reps):
            assert run_["summary"]["config_hash"] == rep.config.config_hash()
            assert ExperimentConfig.from_dict(run_["summary"]["config"]) == rep.config
            got = [{k: v for k, v in p.items() if k != "config_hash"} for p in run_["passages"]]
            assert got == rep.passages

    def test_unwritable_destination(self, tmp_path):
        rep = run_random(node_cfg())
        with pytest.raises(OSError):
            emit_report(rep, "csv", tmp_path / "missing" / "r.csv")

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            render_report([], "xml")
