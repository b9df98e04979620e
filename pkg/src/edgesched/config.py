"""Run configuration: strict JSON schema, seed sub-streams, default calibration.

A run is described by one JSON document with a ``schema_version`` field;
unknown keys are rejected everywhere so a config cannot silently drift.  All
randomness flows from the single root seed through named sub-streams
(workload, bandwidth, predictor init, bandit, random policy, training
workload), so components can be varied independently.

The defaults below are the package's experiment calibration.  Catalog-level
placeholders (21 / 312 TFLOP/s nameplates, anchor-at-mAP accuracy) remain
the per-function defaults; the experiment calibration overrides them with
sustained-throughput figures, a per-task accuracy headroom on simple
content, requirement capping at the cloud ceiling, and a phi that puts the
compute and bandwidth terms of the objective on a comparable scale.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .simulator import (
    AccuracyModel,
    BandwidthMode,
    BandwidthModel,
    DEPLOYMENT_VERSIONS,
    Environment,
    LabelRule,
    WorkloadSpec,
    build_catalog,
)

SCHEMA_VERSION = 1

SEED_STREAMS = {
    "workload": 0,
    "bandwidth": 1,
    "predictor": 2,
    "bandit": 3,
    "policy_random": 4,
    "train_workload": 5,
}

ABLATIONS = ("rpp", "cdco", "both")
ABLATION_POLICY = {"both": "pref_bandit", "rpp": "pref_only", "cdco": "bandit_only"}
KNOWN_POLICIES = ("pref_bandit", "pref_only", "bandit_only",
                  "all_edge", "all_cloud", "random", "greedy")


def subseed(root_seed: int, stream: str) -> int:
    """Derive a named, order-independent child seed from the root seed."""
    seq = np.random.SeedSequence([int(root_seed), SEED_STREAMS[stream]])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _take(section: dict, allowed, where: str) -> None:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass
class BandwidthConfig:
    mode: str = "stable"
    base_mbps: float = 300.0
    fluctuation_frac: float = 0.2


@dataclass
class WorkloadConfig:
    n_tasks: int = 10_000
    horizon_slots: int | None = None
    acc_req_range: tuple = (50.0, 80.0)
    delay_req_range: tuple = (0.2, 0.6)
    frame_side: int = 32
    equiv_pixels: int = 960 * 540
    bits_per_pixel: int = 8
    compression_ratio: float = 0.1
    frames_per_clip: int = 15
    frame_mix: tuple = (0.15, 0.15, 0.70)
    cap_acc_req_to_achievable: bool = True


@dataclass
class ServerConfig:
    n_edge: int = 4
    edge_tflops: float = 0.28       # sustained throughput, not nameplate
    cloud_tflops: float = 13.0
    edge_power: tuple = (24.0, 5.0, 2.0)
    cloud_power: tuple = (300.0, 60.0, 12.0)
    edge_concurrency: int = 3
    cloud_concurrency: int = 16
    local_link_mult: float = 10.0


@dataclass
class AccuracyConfig:
    headroom: float = 40.0
    base_penalty: float = 10.0
    robustness_exponent: float = 1.2


@dataclass
class LabelConfig:
    margin_map: float = 6.0
    slack_fraction: float = 0.2
    rtt_concurrency: int = 16
    min_complexity: float = 0.35


@dataclass
class SchedulerConfig:
    phi: float = 0.002
    alpha: float = 0.9
    beta: float = 0.9
    feasibility_threshold: float = 0.5
    cross_tier_min_plays: int = 8
    cross_tier_threshold: float = 0.85
    cross_tier_explore_period: int = 10


@dataclass
class PredictorConfig:
    hidden: int = 16
    n_layers: int = 2
    seq_len: int = 8
    epochs: int = 150
    lr: float = 2.0
    train_windows: int = 1200
    weights_path: str | None = None


@dataclass
class SimConfig:
    slot_seconds: float = 0.1
    preproc_seconds: float = 0.014
    max_attempts: int = 3
    count_failed_slot_delay: bool = True
    retry_skip_doomed: bool = True
    retry_estimate_concurrency: int = 16


@dataclass
class MatrixConfig:
    policies: tuple = ("pref_bandit", "all_edge", "all_cloud", "random", "greedy")
    versions: tuple = ("V1", "V2", "V3", "V4")
    bandwidth_modes: tuple = ("stable", "fluctuating")
    seeds: tuple = (0,)
    baseline: str = "all_cloud"


_SECTIONS = {
    "bandwidth": BandwidthConfig,
    "workload": WorkloadConfig,
    "servers": ServerConfig,
    "accuracy": AccuracyConfig,
    "labels": LabelConfig,
    "scheduler": SchedulerConfig,
    "predictor": PredictorConfig,
    "sim": SimConfig,
    "matrix": MatrixConfig,
}


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "out"
    version: str = "V1"
    ablation: str = "both"
    bandwidth: BandwidthConfig = field(default_factory=BandwidthConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    servers: ServerConfig = field(default_factory=ServerConfig)
    accuracy: AccuracyConfig = field(default_factory=AccuracyConfig)
    labels: LabelConfig = field(default_factory=LabelConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    matrix: MatrixConfig = field(default_factory=MatrixConfig)

    def __post_init__(self):
        if self.version not in DEPLOYMENT_VERSIONS:
            raise ConfigError(f"unknown deployment version {self.version!r}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.bandwidth.mode not in ("stable", "fluctuating"):
            raise ConfigError(f"unknown bandwidth mode {self.bandwidth.mode!r}")
        for name in self.matrix.policies:
            if name not in KNOWN_POLICIES:
                raise ConfigError(f"unknown policy {name!r} in matrix.policies")
        for v in self.matrix.versions:
            if v not in DEPLOYMENT_VERSIONS:
                raise ConfigError(f"unknown version {v!r} in matrix.versions")
        for m in self.matrix.bandwidth_modes:
            if m not in ("stable", "fluctuating"):
                raise ConfigError(f"unknown bandwidth mode {m!r} in matrix")

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        version_field = doc.pop("schema_version", None)
        if version_field != SCHEMA_VERSION:
            raise ConfigError(
                f"schema_version must be {SCHEMA_VERSION}, got {version_field!r}"
            )
        top_allowed = {"seed", "out_dir", "version", "ablation", *_SECTIONS}
        _take(doc, top_allowed, "config root")
        kwargs = {}
        for key in ("seed", "out_dir", "version", "ablation"):
            if key in doc:
                kwargs[key] = doc[key]
        for name, section_cls in _SECTIONS.items():
            if name in doc:
                section = doc[name]
                if not isinstance(section, dict):
                    raise ConfigError(f"section {name!r} must be an object")
                fields = section_cls.__dataclass_fields__
                _take(section, fields, f"section {name!r}")
                coerced = {
                    k: tuple(v) if isinstance(v, list) else v
                    for k, v in section.items()
                }
                kwargs[name] = section_cls(**coerced)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        doc = {"schema_version": SCHEMA_VERSION}
        doc.update(asdict(self))
        return doc

    # -- factories -----------------------------------------------------------

    def deployment(self, version: str | None = None):
        return DEPLOYMENT_VERSIONS[version or self.version]

    def accuracy_model(self) -> AccuracyModel:
        return AccuracyModel(
            headroom=self.accuracy.headroom,
            base_penalty=self.accuracy.base_penalty,
            robustness_exponent=self.accuracy.robustness_exponent,
        )

    def label_rule(self) -> LabelRule:
        return LabelRule(
            margin_map=self.labels.margin_map,
            slack_fraction=self.labels.slack_fraction,
            rtt_concurrency=self.labels.rtt_concurrency,
            min_complexity=self.labels.min_complexity,
        )

    def workload_spec(self, seed: int, stream: str = "workload",
                      n_tasks: int | None = None) -> WorkloadSpec:
        return WorkloadSpec(
            n_tasks=n_tasks or self.workload.n_tasks,
            horizon_slots=self.workload.horizon_slots,
            acc_req_range=tuple(self.workload.acc_req_range),
            delay_req_range=tuple(self.workload.delay_req_range),
            frame_side=self.workload.frame_side,
            equiv_pixels=self.workload.equiv_pixels,
            bits_per_pixel=self.workload.bits_per_pixel,
            compression_ratio=self.workload.compression_ratio,
            frames_per_clip=self.workload.frames_per_clip,
            frame_mix=tuple(self.workload.frame_mix),
            cap_acc_req_to_achievable=self.workload.cap_acc_req_to_achievable,
            seed=subseed(seed, stream),
        )

    def environment(self, version: str | None = None, bw_mode: str | None = None,
                    seed: int | None = None) -> Environment:
        seed = self.seed if seed is None else seed
        mode = BandwidthMode(bw_mode or self.bandwidth.mode)
        wan = BandwidthModel(
            mode=mode,
            base_mbps=self.bandwidth.base_mbps,
            fluctuation_frac=self.bandwidth.fluctuation_frac,
            seed=subseed(seed, "bandwidth"),
        )
        servers = build_catalog(
            self.deployment(version),
            n_edge=self.servers.n_edge,
            edge_tflops=self.servers.edge_tflops,
            cloud_tflops=self.servers.cloud_tflops,
            edge_power=tuple(self.servers.edge_power),
            cloud_power=tuple(self.servers.cloud_power),
            edge_concurrency=self.servers.edge_concurrency,
            cloud_concurrency=self.servers.cloud_concurrency,
        )
        return Environment(
            servers=tuple(servers),
            wan=wan,
            acc_model=self.accuracy_model(),
            local_link_mult=self.servers.local_link_mult,
            slot_seconds=self.sim.slot_seconds,
            preproc_seconds=self.sim.preproc_seconds,
            max_attempts=self.sim.max_attempts,
            count_failed_slot_delay=self.sim.count_failed_slot_delay,
            retry_skip_doomed=self.sim.retry_skip_doomed,
            retry_estimate_concurrency=self.sim.retry_estimate_concurrency,
            label_rule=self.label_rule(),
        )


def default_config() -> RunConfig:
    return RunConfig()


def write_default_config(path) -> None:
    Path(path).write_text(json.dumps(default_config().to_dict(), indent=2, sort_keys=True))
