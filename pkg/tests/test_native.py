from rmrlab.harness.native import StressConfig, stress_native


def test_one_thread_passes():
    v = stress_native(StressConfig(threads=1, passages=200))
    assert v.ok
    assert v.stats["passages"] == 200


def test_contended_tree_with_aborts():
    v = stress_native(StressConfig(threads=4, passages=300, delta=2, abort_probability=0.05, seed=3))
    assert v.ok, v
    assert v.stats["passages"] == 1200


def test_node_lock_threads():
    v = stress_native(StressConfig(object="node_lock", threads=3, passages=300))
    assert v.ok, v


def test_dropped_deregistration_is_detected():
    v = stress_native(StressConfig(object="node_lock", threads=2, passages=100, faults=("skip_deregister",),
                                   stall_seconds=1.0))
    assert v.status == "violation"
    assert v.kind in ("livelock", "mutual-exclusion")
    assert v.witness


def test_time_limit():
    v = stress_native(StressConfig(threads=2, passages=10**7, time_limit=0.5))
    assert v.status == "budget_exhausted"
