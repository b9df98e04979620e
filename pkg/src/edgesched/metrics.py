"""Trace aggregation into the evaluation metric suite, plus baseline policies.

Per-task quantities (success rates, average accuracy/delay) are unweighted
means over final task records; per-slot quantities (compute, bandwidth,
energy) are summed or time-averaged over every slot of the run, idle slots
included.  Comparison tables report absolute values next to percentage
deltas against a designated baseline row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTraceError, IncomparableError, NoServerError
from .scheduler import AllocationScheme, Tier
from .simulator import (
    Environment,
    Policy,
    RunResult,
    inference_delay,
    transmission_delay,
)

REPORT_COLUMNS = (
    "policy", "version", "bw_mode", "avg_acc", "acc_sr", "delay_sr",
    "avg_delay_ms", "compute_tflop", "bw_mbps", "energy_j",
)


@dataclass
class RunReport:
    """One run's aggregate metrics."""

    policy: str
    version: str
    bw_mode: str
    avg_accuracy: float
    acc_success_rate: float
    delay_success_rate: float
    avg_delay_ms: float
    compute_tflop_total: float
    bandwidth_mbps_avg: float
    energy_j_total: float
    objective: float
    n_tasks: int
    seed: int = 0
    regret_trace: list = field(default_factory=list, repr=False)

    def row(self) -> dict:
        return {
            "policy": self.policy,
            "version": self.version,
            "bw_mode": self.bw_mode,
            "avg_acc": self.avg_accuracy,
            "acc_sr": self.acc_success_rate,
            "delay_sr": self.delay_success_rate,
            "avg_delay_ms": self.avg_delay_ms,
            "compute_tflop": self.compute_tflop_total,
            "bw_mbps": self.bandwidth_mbps_avg,
            "energy_j": self.energy_j_total,
        }

    def to_json_dict(self) -> dict:
        doc = self.row()
        doc["objective"] = self.objective
        doc["n_tasks"] = self.n_tasks
        doc["seed"] = self.seed
        doc["regret_trace"] = list(self.regret_trace)
        return doc


def aggregate(result: RunResult) -> RunReport:
    """Collapse one run's records and slots into a RunReport."""
    if not result.records or not result.slots:
        raise EmptyTraceError("nothing to aggregate")
    records = result.records
    acc = np.array([r.accuracy for r in records])
    delay = np.array([r.delay for r in records])
    acc_ok = np.array([r.acc_ok for r in records])
    delay_ok = np.array([r.delay_ok for r in records])
    U = np.array([s.U for s in result.slots])
    B = np.array([s.B for s in result.slots])
    energy = np.array([s.energy_j for s in result.slots])
    phi = result.objective_phi
    return RunReport(
        policy=result.meta.get("policy", "unknown"),
        version=result.meta.get("version", "-"),
        bw_mode=result.meta.get("bw_mode", "-"),
        avg_accuracy=float(acc.mean()),
        acc_success_rate=float(acc_ok.mean()),
        delay_success_rate=float(delay_ok.mean()),
        avg_delay_ms=float(delay.mean() * 1000.0),
        compute_tflop_total=float(U.sum()),
        bandwidth_mbps_avg=float(B.mean()),
        energy_j_total=float(energy.sum()),
        objective=float(np.mean(U + phi * B)),
        n_tasks=len(records),
        seed=result.meta.get("seed", 0),
        regret_trace=list(result.regret_trace),
    )


DELTA_FIELDS = ("avg_acc", "acc_sr", "delay_sr", "avg_delay_ms",
                "compute_tflop", "bw_mbps", "energy_j")


@dataclass
class ComparisonTable:
    """Absolute metrics per policy plus percentage deltas vs a baseline."""

    version: str
    bw_mode: str
    baseline: str
    rows: list

    def to_csv(self, path) -> None:
        cols = list(REPORT_COLUMNS) + [f"d_{f}" for f in DELTA_FIELDS]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in self.rows:
                cells = [
                    str(row[c]) if c in ("policy", "version", "bw_mode") else repr(row[c])
                    for c in cols
                ]
                fh.write(",".join(cells) + "\n")


def compare(reports, baseline_policy: str | None = None) -> ComparisonTable:
    """Tabulate reports from one scenario against a designated baseline.

    Deltas are percentages of the baseline value ((subject - base) / base);
    their sign flips when baseline and subject swap roles.
    """
    if len(reports) < 2:
        raise IncomparableError("need at least two reports to compare")
    versions = {r.version for r in reports}
    modes = {r.bw_mode for r in reports}
    if len(versions) != 1 or len(modes) != 1:
        raise IncomparableError(
            f"mismatched scenarios: versions={sorted(versions)}, modes={sorted(modes)}"
        )
    names = [r.policy for r in reports]
    if baseline_policy is None:
        baseline_policy = names[0]
    if baseline_policy not in names:
        raise IncomparableError(f"baseline {baseline_policy!r} not among {names}")
    base = next(r for r in reports if r.policy == baseline_policy)
    base_row = base.row()
    rows = []
    for rep in reports:
        row = rep.row()
        for f in DELTA_FIELDS:
            bv = base_row[f]
            row[f"d_{f}"] = 0.0 if bv == 0 else (row[f] - bv) / bv * 100.0
        rows.append(row)
    return ComparisonTable(
        version=versions.pop(), bw_mode=modes.pop(),
        baseline=baseline_policy, rows=rows,
    )


# -- baseline policies ---------------------------------------------------------


class AllCloudPolicy(Policy):
    """Every task goes to the cloud server."""

    name = "all_cloud"

    def place(self, t, tasks, floors, env):
        cid = env.cloud_server.id
        return AllocationScheme({v.id: cid for v in tasks}, slot=t)


class AllEdgePolicy(Policy):
    """Round-robin over edge servers; escalated tasks go to the cloud."""

    name = "all_edge"

    def __init__(self):
        self._next = 0

    def place(self, t, tasks, floors, env):
        edges = env.edge_servers
        cid = env.cloud_server.id
        assignment = {}
        for task in sorted(tasks, key=lambda v: v.id):
            if floors.get(task.id, Tier.EDGE) >= Tier.CLOUD:
                assignment[task.id] = cid
            else:
                assignment[task.id] = edges[self._next % len(edges)].id
                self._next += 1
        return AllocationScheme(assignment, slot=t)


class RandomPolicy(Policy):
    """Uniform-random server per task, deterministic per seed."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def place(self, t, tasks, floors, env):
        servers = sorted(env.servers, key=lambda s: s.id)
        cid = env.cloud_server.id
        assignment = {}
        for task in sorted(tasks, key=lambda v: v.id):
            if floors.get(task.id, Tier.EDGE) >= Tier.CLOUD:
                assignment[task.id] = cid
            else:
                assignment[task.id] = servers[int(self.rng.integers(len(servers)))].id
        return AllocationScheme(assignment, slot=t)


class GreedyLeastCostPolicy(Policy):
    """Per-task myopic argmin of estimated U + phi * B, feasibility-screened.

    Estimates assume an idle server, an uncontended link and population-mean
    content complexity; the policy never looks at the current load, which is
    exactly the information the bandit learns.
    """

    name = "greedy"

    def __init__(self, phi: float = 1.0, assumed_complexity: float = 0.5):
        self.phi = phi
        self.assumed_complexity = assumed_complexity

    def estimate(self, task, server, env: Environment):
        """(feasible?, myopic cost) under idle assumptions."""
        est_acc = env.acc_model.quality(server.deployed_model, self.assumed_complexity)
        link = (env.wan.base_mbps if server.tier == Tier.CLOUD
                else env.local_link_mbps)
        est_delay = (env.preproc_seconds
                     + transmission_delay(task.data_size, link)
                     + inference_delay(server, 1))
        u = server.deployed_model.flops_gflop / 1000.0
        b = task.data_size / env.slot_seconds if server.tier == Tier.CLOUD else 0.0
        ok = est_acc >= task.accuracy_req and est_delay <= task.delay_req
        return ok, u + self.phi * b

    def place(self, t, tasks, floors, env):
        servers = sorted(env.servers, key=lambda s: s.id)
        cid = env.cloud_server.id
        assignment = {}
        for task in sorted(tasks, key=lambda v: v.id):
            if floors.get(task.id, Tier.EDGE) >= Tier.CLOUD:
                assignment[task.id] = cid
                continue
            best = None
            for server in servers:
                ok, cost = self.estimate(task, server, env)
                if ok and (best is None or cost < best[0]):
                    best = (cost, server.id)
            assignment[task.id] = best[1] if best else cid
        return AllocationScheme(assignment, slot=t)


def baseline_policies(seed: int = 0, phi: float = 1.0) -> dict:
    """The four non-learning policies, keyed by their report names."""
    return {
        "all_edge": AllEdgePolicy(),
        "all_cloud": AllCloudPolicy(),
        "random": RandomPolicy(seed=seed),
        "greedy": GreedyLeastCostPolicy(phi=phi),
    }
