"""Tests for trace aggregation, comparisons and the baseline policies."""

import pytest

from edgesched.errors import EmptyTraceError, IncomparableError
from edgesched.metrics import (
    AllCloudPolicy,
    AllEdgePolicy,
    GreedyLeastCostPolicy,
    RandomPolicy,
    RunReport,
    aggregate,
    baseline_policies,
    compare,
)
from edgesched.scheduler import SlotOutcome, Task, Tier
from edgesched.simulator import (
    BandwidthMode,
    BandwidthModel,
    DEPLOYMENT_VERSIONS,
    Environment,
    RunResult,
    TaskRecord,
    build_catalog,
    inference_delay,
    transmission_delay,
)


def env_for_tests():
    servers = build_catalog(DEPLOYMENT_VERSIONS["V1"], n_edge=3,
                            edge_tflops=21.0, cloud_tflops=312.0)
    return Environment(servers=tuple(servers),
                       wan=BandwidthModel(BandwidthMode.STABLE, 300.0))


def record(tid, acc, acc_req, delay, delay_req):
    return TaskRecord(task_id=tid, accuracy_req=acc_req, delay_req=delay_req,
                      accuracy=acc, delay=delay, attempts=1, server_id=0,
                      acc_ok=acc >= acc_req, delay_ok=delay <= delay_req)


def result_from(records, slots, policy="p", version="V1", mode="stable", phi=1.0):
    return RunResult(
        meta={"policy": policy, "version": version, "bw_mode": mode, "phi": phi},
        records=records, rows=[], slots=slots, reward_trace=[], regret_trace=[],
    )


# -- aggregate -------------------------------------------------------------------

def test_aggregate_all_successful():
    records = [record(i, 70.0, 60.0, 0.2, 0.4) for i in range(4)]
    slots = [SlotOutcome(t=0, U=1.0, B=2.0, energy_j=3.0)]
    report = aggregate(result_from(records, slots))
    assert report.acc_success_rate == 1.0
    assert report.delay_success_rate == 1.0


def test_aggregate_93_percent():
    records = [record(i, 70.0, 60.0, 0.2, 0.4) for i in range(93)]
    records += [record(90 + i, 50.0, 60.0, 0.2, 0.4) for i in range(7)]
    report = aggregate(result_from(records, [SlotOutcome(t=0)]))
    assert report.acc_success_rate == pytest.approx(0.93)


def test_aggregate_hand_built_trace():
    records = [
        record(0, 66.0, 60.0, 0.10, 0.30),
        record(1, 55.0, 70.0, 0.30, 0.25),
        record(2, 62.0, 62.0, 0.40, 0.40),
    ]
    slots = [
        SlotOutcome(t=0, U=0.5, B=10.0, energy_j=4.0),
        SlotOutcome(t=1, U=0.3, B=0.0, energy_j=2.0),
    ]
    report = aggregate(result_from(records, slots, phi=0.5))
    assert report.avg_accuracy == pytest.approx((66 + 55 + 62) / 3)
    assert report.acc_success_rate == pytest.approx(2 / 3)
    assert report.delay_success_rate == pytest.approx(2 / 3)
    assert report.avg_delay_ms == pytest.approx((100 + 300 + 400) / 3)
    assert report.compute_tflop_total == pytest.approx(0.8)
    assert report.bandwidth_mbps_avg == pytest.approx(5.0)
    assert report.energy_j_total == pytest.approx(6.0)
    assert report.objective == pytest.approx(((0.5 + 5.0) + 0.3) / 2)
    assert report.n_tasks == 3


def test_aggregate_permutation_invariant():
    records = [record(i, 60.0 + i, 60.0, 0.1 * (i + 1), 0.35) for i in range(4)]
    slots = [SlotOutcome(t=0, U=1.0, B=1.0, energy_j=1.0)]
    a = aggregate(result_from(list(records), list(slots)))
    b = aggregate(result_from(records[::-1], list(slots)))
    for key, value in a.row().items():
        if isinstance(value, float):
            assert b.row()[key] == pytest.approx(value, abs=1e-12)
        else:
            assert b.row()[key] == value


def test_aggregate_rate_flip_quantum():
    records = [record(i, 70.0, 60.0, 0.1, 0.4) for i in range(10)]
    base = aggregate(result_from(list(records), [SlotOutcome(t=0)]))
    records[0] = record(0, 50.0, 60.0, 0.1, 0.4)
    flipped = aggregate(result_from(records, [SlotOutcome(t=0)]))
    assert base.acc_success_rate - flipped.acc_success_rate == pytest.approx(1 / 10)


def test_aggregate_empty():
    with pytest.raises(EmptyTraceError):
        aggregate(result_from([], [SlotOutcome(t=0)]))


# -- compare ---------------------------------------------------------------------

def _report(policy, compute, version="V1", mode="stable"):
    return RunReport(policy=policy, version=version, bw_mode=mode,
                     avg_accuracy=65.0, acc_success_rate=0.9,
                     delay_success_rate=0.9, avg_delay_ms=250.0,
                     compute_tflop_total=compute, bandwidth_mbps_avg=20.0,
                     energy_j_total=12.0, objective=1.0, n_tasks=100)


def test_compare_delta_example():
    table = compare([_report("baseline", 41.5), _report("subject", 29.1)],
                    baseline_policy="baseline")
    row = next(r for r in table.rows if r["policy"] == "subject")
    assert row["d_compute_tflop"] == pytest.approx(-29.88, abs=0.01)


def test_compare_self_zero():
    table = compare([_report("a", 10.0), _report("b", 10.0)], baseline_policy="a")
    row_a = next(r for r in table.rows if r["policy"] == "a")
    assert all(row_a[k] == 0.0 for k in row_a if k.startswith("d_"))


def test_compare_sign_antisymmetry():
    r_a, r_b = _report("a", 40.0), _report("b", 30.0)
    d_ab = next(r for r in compare([r_a, r_b], "a").rows if r["policy"] == "b")
    d_ba = next(r for r in compare([r_a, r_b], "b").rows if r["policy"] == "a")
    assert d_ab["d_compute_tflop"] < 0 < d_ba["d_compute_tflop"]


def test_compare_mismatched_scenarios():
    with pytest.raises(IncomparableError):
        compare([_report("a", 1.0, version="V1"), _report("b", 1.0, version="V2")])
    with pytest.raises(IncomparableError):
        compare([_report("a", 1.0)])


# -- baselines --------------------------------------------------------------------

def task_for(tid, acc=55.0, delay=0.5, data=1.0, complexity=0.0):
    return Task(id=tid, arrival_t=0, data_size=data, accuracy_req=acc,
                delay_req=delay, complexity=complexity)


def test_baseline_policy_set():
    policies = baseline_policies(seed=3, phi=1.0)
    assert set(policies) == {"all_edge", "all_cloud", "random", "greedy"}


def test_all_cloud_assigns_everything_to_cloud():
    env = env_for_tests()
    tasks = [task_for(i) for i in range(5)]
    scheme = AllCloudPolicy().place(0, tasks, {}, env)
    assert set(scheme.assignment.values()) == {env.cloud_server.id}


def test_all_edge_round_robin():
    env = env_for_tests()
    tasks = [task_for(i) for i in range(6)]
    scheme = AllEdgePolicy().place(0, tasks, {}, env)
    ids = [scheme.assignment[i] for i in range(6)]
    assert ids == [0, 1, 2, 0, 1, 2]


def test_random_policy_deterministic():
    env = env_for_tests()
    tasks = [task_for(i) for i in range(20)]
    s1 = RandomPolicy(seed=5).place(0, tasks, {}, env)
    s2 = RandomPolicy(seed=5).place(0, tasks, {}, env)
    assert s1.assignment == s2.assignment


def test_greedy_matches_exhaustive_per_task_search():
    env = env_for_tests()
    policy = GreedyLeastCostPolicy(phi=1.0, assumed_complexity=0.5)
    tasks = [task_for(0, acc=50.0, delay=0.5),      # edge is fine and cheaper
             task_for(1, acc=65.0, delay=0.5),      # needs the cloud model
             task_for(2, acc=50.0, delay=0.005)]    # nothing feasible -> cloud
    scheme = policy.place(0, tasks, {}, env)
    for task in tasks:
        best, best_cost = None, None
        for server in env.servers:
            ok, cost = policy.estimate(task, server, env)
            if ok and (best_cost is None or cost < best_cost):
                best, best_cost = server.id, cost
        expected = best if best is not None else env.cloud_server.id
        assert scheme.assignment[task.id] == expected
    assert scheme.assignment[0] in {0, 1, 2}
    assert scheme.assignment[1] == env.cloud_server.id
    assert scheme.assignment[2] == env.cloud_server.id


def test_greedy_respects_floor():
    env = env_for_tests()
    tasks = [task_for(0, acc=50.0)]
    scheme = GreedyLeastCostPolicy(phi=1.0).place(0, tasks, {0: Tier.CLOUD}, env)
    assert scheme.assignment[0] == env.cloud_server.id
