"""Orchestration shared by the CLI and the acceptance suite.

Builds workloads, trains the preference classifier on rule-labelled windows,
executes single runs and the full policy x version x bandwidth matrix, and
writes the trace/report/comparison artifacts with deterministic formatting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ABLATION_POLICY, RunConfig, subseed
from .errors import ConfigError
from .metrics import ComparisonTable, RunReport, aggregate, baseline_policies, compare
from .predictor import PreferencePredictor, TrainingReport, accuracy_on, train
from .simulator import (
    BanditOnlyPolicy,
    Policy,
    PreferenceBanditPolicy,
    PreferenceOnlyPolicy,
    RunResult,
    TRACE_COLUMNS,
    Workload,
    generate_workload,
    label_windows,
    predict_workload,
    run_policy,
)


def build_workload(cfg: RunConfig, version: str, seed: int,
                   stream: str = "workload", n_tasks: int | None = None) -> Workload:
    spec = cfg.workload_spec(seed, stream=stream, n_tasks=n_tasks)
    return generate_workload(spec, cfg.deployment(version), cfg.accuracy_model())


def make_policy(cfg: RunConfig, name: str, seed: int) -> Policy:
    sched = cfg.scheduler
    spec = cfg.workload_spec(seed)
    # pulls against the cloud prior are allowed only where a failed edge
    # attempt would still leave room for the cloud retry
    retry_floor = (cfg.sim.slot_seconds + cfg.sim.preproc_seconds
                   + spec.data_size_mbits
                   / (cfg.bandwidth.base_mbps / max(1, cfg.sim.retry_estimate_concurrency))
                   + 0.01)
    common = dict(
        phi=sched.phi, alpha=sched.alpha, beta=sched.beta,
        delay_req_range=tuple(cfg.workload.delay_req_range),
        acc_req_range=tuple(cfg.workload.acc_req_range),
        feasibility_threshold=sched.feasibility_threshold,
        cross_tier_min_plays=sched.cross_tier_min_plays,
        cross_tier_threshold=sched.cross_tier_threshold,
        cross_tier_explore_period=sched.cross_tier_explore_period,
        cross_tier_min_delay_req=retry_floor,
        seed=subseed(seed, "bandit"),
    )
    if name == "pref_bandit":
        return PreferenceBanditPolicy(**common)
    if name == "bandit_only":
        return BanditOnlyPolicy(**common)
    if name == "pref_only":
        return PreferenceOnlyPolicy()
    baselines = baseline_policies(seed=subseed(seed, "policy_random"), phi=sched.phi)
    if name in baselines:
        return baselines[name]
    raise ConfigError(f"unknown policy {name!r}")


@dataclass
class TrainedPredictor:
    predictor: PreferencePredictor
    report: TrainingReport
    heldout_accuracy: float


def train_predictor(cfg: RunConfig, version: str | None = None,
                    seed: int | None = None) -> TrainedPredictor:
    """Fit the classifier on rule-labelled windows from a training workload."""
    version = version or cfg.version
    seed = cfg.seed if seed is None else seed
    workload = build_workload(cfg, version, seed, stream="train_workload",
                              n_tasks=cfg.predictor.train_windows)
    env = cfg.environment(version, "stable", seed)
    windows = label_windows(workload, env, cfg.predictor.seq_len,
                            max_delay_req=cfg.workload.delay_req_range[1])
    rng = np.random.default_rng(subseed(seed, "predictor"))
    order = rng.permutation(len(windows))
    cut = max(1, int(0.75 * len(windows)))
    train_set = [windows[i] for i in order[:cut]]
    heldout = [windows[i] for i in order[cut:]] or train_set
    predictor = PreferencePredictor(
        hidden=cfg.predictor.hidden, n_layers=cfg.predictor.n_layers,
        seq_len=cfg.predictor.seq_len,
    )
    report = train(predictor, train_set, epochs=cfg.predictor.epochs,
                   lr=cfg.predictor.lr, seed=subseed(seed, "predictor"))
    return TrainedPredictor(
        predictor=predictor, report=report,
        heldout_accuracy=accuracy_on(predictor, heldout),
    )


def run_cell(cfg: RunConfig, policy_name: str, version: str, bw_mode: str,
             seed: int, workload: Workload | None = None,
             predictions: dict | None = None,
             predictor: PreferencePredictor | None = None) -> RunResult:
    """One (policy, version, bandwidth, seed) simulation."""
    if workload is None:
        workload = build_workload(cfg, version, seed)
    env = cfg.environment(version, bw_mode, seed)
    needs_pref = policy_name in ("pref_bandit", "pref_only")
    if needs_pref and predictions is None:
        if predictor is None:
            raise ConfigError(f"policy {policy_name!r} needs trained weights")
        predictions = predict_workload(predictor, workload,
                                       max_delay_req=cfg.workload.delay_req_range[1])
    policy = make_policy(cfg, policy_name, seed)
    meta = {"policy": policy_name, "version": version, "bw_mode": bw_mode, "seed": seed}
    return run_policy(
        env, workload, policy,
        predictions=predictions if needs_pref else None,
        meta=meta, phi=cfg.scheduler.phi,
        alpha=cfg.scheduler.alpha, beta=cfg.scheduler.beta,
    )


def mean_report(reports) -> RunReport:
    """Average metric fields across seeds for one (policy, version, mode) cell."""
    first = reports[0]
    def avg(attr):
        return float(np.mean([getattr(r, attr) for r in reports]))
    return RunReport(
        policy=first.policy, version=first.version, bw_mode=first.bw_mode,
        avg_accuracy=avg("avg_accuracy"),
        acc_success_rate=avg("acc_success_rate"),
        delay_success_rate=avg("delay_success_rate"),
        avg_delay_ms=avg("avg_delay_ms"),
        compute_tflop_total=avg("compute_tflop_total"),
        bandwidth_mbps_avg=avg("bandwidth_mbps_avg"),
        energy_j_total=avg("energy_j_total"),
        objective=avg("objective"),
        n_tasks=first.n_tasks,
        seed=-1,
        regret_trace=[],
    )


@dataclass
class MatrixResult:
    reports: list            # per (seed, policy, version, mode)
    mean_reports: list       # per (policy, version, mode)
    tables: list             # one ComparisonTable per (version, mode)


def run_matrix(cfg: RunConfig) -> MatrixResult:
    """Execute every configured policy/version/bandwidth/seed combination.

    The classifier is trained once per (seed, version) and shared across
    bandwidth modes and policies; workloads are likewise cached.
    """
    mx = cfg.matrix
    needs_pref = any(p in ("pref_bandit", "pref_only") for p in mx.policies)
    all_reports = []
    for seed in mx.seeds:
        for version in mx.versions:
            workload = build_workload(cfg, version, seed)
            predictions = None
            if needs_pref:
                trained = train_predictor(cfg, version, seed)
                predictions = predict_workload(
                    trained.predictor, workload,
                    max_delay_req=cfg.workload.delay_req_range[1])
            for mode in mx.bandwidth_modes:
                for policy_name in mx.policies:
                    result = run_cell(cfg, policy_name, version, mode, seed,
                                      workload=workload, predictions=predictions)
                    all_reports.append(aggregate(result))
    mean_reports = []
    for version in mx.versions:
        for mode in mx.bandwidth_modes:
            for policy_name in mx.policies:
                cell = [r for r in all_reports
                        if (r.policy, r.version, r.bw_mode) == (policy_name, version, mode)]
                mean_reports.append(mean_report(cell))
    tables = []
    for version in mx.versions:
        for mode in mx.bandwidth_modes:
            scenario = [r for r in mean_reports
                        if (r.version, r.bw_mode) == (version, mode)]
            baseline = mx.baseline if mx.baseline in [r.policy for r in scenario] else scenario[0].policy
            tables.append(compare(scenario, baseline_policy=baseline))
    return MatrixResult(reports=all_reports, mean_reports=mean_reports, tables=tables)


# -- artifact writers ----------------------------------------------------------


def write_trace_csv(result: RunResult, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for row in result.rows:
            cells = []
            for col in TRACE_COLUMNS:
                v = row[col]
                if isinstance(v, bool):
                    cells.append(str(int(v)))
                elif isinstance(v, float):
                    cells.append(repr(v))
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")


def write_report_json(report: RunReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_json_dict(), sort_keys=True) + "\n")


def write_matrix_csv(tables, path) -> None:
    """Concatenate per-scenario comparison tables into one CSV."""
    from .metrics import DELTA_FIELDS, REPORT_COLUMNS

    cols = list(REPORT_COLUMNS) + [f"d_{f}" for f in DELTA_FIELDS]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for table in tables:
            for row in table.rows:
                cells = [
                    str(row[c]) if c in ("policy", "version", "bw_mode") else repr(row[c])
                    for c in cols
                ]
                fh.write(",".join(cells) + "\n")
