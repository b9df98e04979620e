"""Edge-cloud world model: servers, bandwidth, workloads and slot accounting.

Time is slotted; tasks arrive at slot boundaries, are assigned by a policy,
and either meet their accuracy/delay requirements or are escalated to a
richer tier in the next slot (the constraint-violation rule of the problem
formulation, applied to every policy).  The module also hosts the run engine
and the learning policies; the non-learning baselines live in ``metrics``.

Per-slot accounting follows the evaluation definitions: compute consumption
is FP16 throughput times inference time, bandwidth consumption is WAN
megabits per slot second, and energy is working + idle + transmission power
times their respective durations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .complexity import Frame, minmax_scale, spatial_complexity
from .errors import ConfigError, DomainError, MismatchError, RangeError
from .scheduler import (
    AllocationScheme,
    BanditState,
    Preference,
    SlotOutcome,
    Task,
    Tier,
    feasible,
    feedback,
    initial_placement,
    select_super_arm,
)

# -- model catalog (published detector family: params M, mAP50, GFLOPs) ------


@dataclass(frozen=True)
class ModelSpec:
    name: str
    params_millions: float
    map50: float
    flops_gflop: float

    def __post_init__(self):
        if min(self.params_millions, self.flops_gflop) <= 0 or not 0 < self.map50 < 100:
            raise RangeError(f"bad model spec {self}")


MODEL_CATALOG = {
    "yolov5s": ModelSpec("yolov5s", 7.2, 56.8, 16.5),
    "yolov5l": ModelSpec("yolov5l", 46.5, 67.3, 109.1),
    "yolov5x": ModelSpec("yolov5x", 86.7, 68.9, 205.7),
    "yolov5s6": ModelSpec("yolov5s6", 12.6, 63.7, 16.8),
    "yolov5l6": ModelSpec("yolov5l6", 76.8, 71.3, 111.4),
    "yolov5x6": ModelSpec("yolov5x6", 140.7, 72.7, 209.8),
}


@dataclass(frozen=True)
class DeploymentVersion:
    name: str
    edge_model: ModelSpec
    cloud_model: ModelSpec

    def __post_init__(self):
        if self.cloud_model.params_millions <= self.edge_model.params_millions:
            raise RangeError("cloud model must be larger than the edge model")


DEPLOYMENT_VERSIONS = {
    "V1": DeploymentVersion("V1", MODEL_CATALOG["yolov5s"], MODEL_CATALOG["yolov5l"]),
    "V2": DeploymentVersion("V2", MODEL_CATALOG["yolov5s"], MODEL_CATALOG["yolov5x"]),
    "V3": DeploymentVersion("V3", MODEL_CATALOG["yolov5s6"], MODEL_CATALOG["yolov5l6"]),
    "V4": DeploymentVersion("V4", MODEL_CATALOG["yolov5s6"], MODEL_CATALOG["yolov5x6"]),
}


# -- servers ------------------------------------------------------------------


@dataclass(frozen=True)
class ServerSpec:
    id: int
    tier: Tier
    deployed_model: ModelSpec
    fp16_tflops: float
    work_power_w: float
    idle_power_w: float
    tx_power_w: float
    max_concurrency: int = 1

    def __post_init__(self):
        if self.fp16_tflops <= 0 or self.max_concurrency < 1:
            raise RangeError("server needs positive throughput and concurrency")


def build_catalog(version: DeploymentVersion, n_edge: int = 4,
                  edge_tflops: float = 21.0, cloud_tflops: float = 312.0,
                  edge_power=(15.0, 5.0, 2.0), cloud_power=(300.0, 60.0, 10.0),
                  edge_concurrency: int = 1, cloud_concurrency: int = 16) -> list:
    """Edge pool plus the single cloud server, ids 0..n_edge."""
    if n_edge < 1:
        raise ConfigError("need at least one edge server")
    if cloud_tflops <= edge_tflops:
        raise ConfigError("cloud throughput must exceed edge throughput")
    servers = [
        ServerSpec(i, Tier.EDGE, version.edge_model, edge_tflops,
                   *edge_power, edge_concurrency)
        for i in range(n_edge)
    ]
    servers.append(
        ServerSpec(n_edge, Tier.CLOUD, version.cloud_model, cloud_tflops,
                   *cloud_power, cloud_concurrency)
    )
    return servers


# -- bandwidth -----------------------------------------------------------------


class BandwidthMode(Enum):
    STABLE = "stable"
    FLUCTUATING = "fluctuating"


@dataclass(frozen=True)
class BandwidthModel:
    mode: BandwidthMode = BandwidthMode.STABLE
    base_mbps: float = 300.0
    fluctuation_frac: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.base_mbps <= 0 or not 0.0 <= self.fluctuation_frac < 1.0:
            raise RangeError("bandwidth base must be positive, fraction in [0, 1)")


def sample_bandwidth(model: BandwidthModel, t: int) -> float:
    """Per-slot WAN bandwidth; fluctuating draws are keyed by (seed, t)."""
    if t < 0:
        raise RangeError("slot index must be non-negative")
    if model.mode == BandwidthMode.STABLE or model.fluctuation_frac == 0.0:
        return model.base_mbps
    rng = np.random.default_rng((model.seed, t))
    lo = model.base_mbps * (1.0 - model.fluctuation_frac)
    hi = model.base_mbps * (1.0 + model.fluctuation_frac)
    return float(rng.uniform(lo, hi))


# -- accuracy model -------------------------------------------------------------


@dataclass(frozen=True)
class AccuracyModel:
    """Maps (model, task complexity) to realised per-task accuracy.

    quality = clamp(map50 + headroom * (1 - c) - penalty(model) * c, 0, 100)

    The defaults (headroom 0, uniform penalty 10) anchor quality at the
    catalog mAP for the simplest content and 10 points below it for the
    hardest.  ``robustness_exponent`` > 0 lets larger models degrade more
    slowly with content complexity, which is what the experiment calibration
    uses; the reference model (the smallest in the catalog) always keeps the
    base penalty.
    """

    headroom: float = 0.0
    base_penalty: float = 10.0
    reference_params_m: float = 7.2
    robustness_exponent: float = 0.0

    def penalty_for(self, model: ModelSpec) -> float:
        if self.robustness_exponent == 0.0:
            return self.base_penalty
        return self.base_penalty * (
            self.reference_params_m / model.params_millions
        ) ** self.robustness_exponent

    def quality(self, model: ModelSpec, complexity: float) -> float:
        q = (model.map50 + self.headroom * (1.0 - complexity)
             - self.penalty_for(model) * complexity)
        return float(min(100.0, max(0.0, q)))


def realized_accuracy(task: Task, server: ServerSpec,
                      acc_model: AccuracyModel = AccuracyModel()) -> float:
    """Deterministic per-task accuracy on the server's deployed model."""
    return acc_model.quality(server.deployed_model, task.complexity)


# -- delays ---------------------------------------------------------------------


def inference_delay(server: ServerSpec, count: int = 1) -> float:
    """Seconds per inference; load beyond max_concurrency slows linearly."""
    if count < 1:
        raise RangeError("count must be >= 1")
    base = server.deployed_model.flops_gflop / 1000.0 / server.fp16_tflops
    factor = max(1.0, count / server.max_concurrency)
    return base * factor


def transmission_delay(data_size_mbits: float, bandwidth_mbps: float) -> float:
    if bandwidth_mbps <= 0:
        raise DomainError("bandwidth must be positive")
    if data_size_mbits < 0:
        raise RangeError("data size must be non-negative")
    return data_size_mbits / bandwidth_mbps


def end_to_end_delay(task: Task, server: ServerSpec, bandwidth_mbps: float,
                     load: int = 1, preproc_seconds: float = 0.014) -> float:
    """Pre-processing + transmission + inference, nothing else."""
    return (preproc_seconds
            + transmission_delay(task.data_size, bandwidth_mbps)
            + inference_delay(server, load))


# -- workload -------------------------------------------------------------------


@dataclass(frozen=True)
class WorkloadSpec:
    n_tasks: int = 10_000
    horizon_slots: int | None = None      # default: n_tasks // 8
    acc_req_range: tuple = (50.0, 80.0)
    delay_req_range: tuple = (0.2, 0.6)
    frame_side: int = 32
    equiv_pixels: int = 960 * 540
    bits_per_pixel: int = 8
    compression_ratio: float = 0.1
    frames_per_clip: int = 1
    frame_mix: tuple = (0.15, 0.15, 0.70)  # constant, gradient, texture
    cap_acc_req_to_achievable: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_tasks < 1:
            raise ConfigError("n_tasks must be >= 1")
        for lo, hi in (self.acc_req_range, self.delay_req_range):
            if lo > hi:
                raise ConfigError(f"inverted range ({lo}, {hi})")
        if abs(sum(self.frame_mix) - 1.0) > 1e-9 or min(self.frame_mix) < 0:
            raise ConfigError("frame_mix must be a probability triple")

    @property
    def horizon(self) -> int:
        if self.horizon_slots is not None:
            return self.horizon_slots
        return max(1, self.n_tasks // 8)

    @property
    def data_size_mbits(self) -> float:
        bits = self.equiv_pixels * self.bits_per_pixel * self.compression_ratio
        return bits * self.frames_per_clip / 1e6


class Workload(list):
    """List of (Task, Frame) pairs plus the run's complexity scaling."""

    def __init__(self, pairs, complexity_lo: float, complexity_hi: float, spec: WorkloadSpec):
        super().__init__(pairs)
        self.complexity_lo = complexity_lo
        self.complexity_hi = complexity_hi
        self.spec = spec

    @property
    def tasks(self):
        return [task for task, _ in self]


def _synth_frame(kind: int, side: int, rng: np.random.Generator) -> Frame:
    if kind == 0:
        value = rng.uniform(-1.0, 1.0)
        grid = np.full((side, side), value)
    elif kind == 1:
        theta = rng.uniform(0.0, np.pi)
        amp = rng.uniform(0.3, 1.0)
        xs = np.linspace(-1.0, 1.0, side)
        plane = np.cos(theta) * xs[None, :] + np.sin(theta) * xs[:, None]
        grid = np.clip(amp * plane / max(1e-9, np.abs(plane).max()), -1.0, 1.0)
    else:
        # sqrt-drawn amplitude spreads the (amplitude-squared-driven)
        # complexity roughly evenly over the scaled range
        amp = float(np.sqrt(rng.uniform(0.02, 1.0)))
        grid = rng.uniform(-amp, amp, size=(side, side))
    return Frame(grid)


def generate_workload(spec: WorkloadSpec, deployment: DeploymentVersion | None = None,
                      acc_model: AccuracyModel | None = None) -> Workload:
    """Synthesize tasks with uniform requirements and frames spanning [0, 1].

    Frames mix constant, smooth-gradient and random-texture content; their
    complexities are min-max scaled across the workload (the constants are
    kept on the returned object).  With ``cap_acc_req_to_achievable`` the
    drawn accuracy requirement is clipped to what the cloud model can
    deliver at the task's complexity, which needs ``deployment`` and
    ``acc_model``.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_tasks
    arrivals = np.sort(rng.integers(0, spec.horizon, size=n))
    kinds = rng.choice(3, size=n, p=np.asarray(spec.frame_mix, dtype=np.float64))
    frames = [_synth_frame(int(k), spec.frame_side, rng) for k in kinds]
    raw_complexity = [spatial_complexity(f).total for f in frames]
    scaled, lo, hi = minmax_scale(raw_complexity)
    acc_lo, acc_hi = spec.acc_req_range
    d_lo, d_hi = spec.delay_req_range
    acc_reqs = rng.uniform(acc_lo, acc_hi, size=n)
    delay_reqs = rng.uniform(d_lo, d_hi, size=n)
    if spec.cap_acc_req_to_achievable:
        if deployment is None or acc_model is None:
            raise ConfigError("requirement capping needs deployment and accuracy model")
        ceilings = np.array([
            acc_model.quality(deployment.cloud_model, c) for c in scaled
        ])
        acc_reqs = np.minimum(acc_reqs, ceilings)
    pairs = []
    for i in range(n):
        task = Task(
            id=i,
            arrival_t=int(arrivals[i]),
            data_size=spec.data_size_mbits,
            accuracy_req=float(acc_reqs[i]),
            delay_req=float(delay_reqs[i]),
            complexity=float(scaled[i]),
        )
        pairs.append((task, frames[i]))
    return Workload(pairs, lo, hi, spec)


# -- environment ----------------------------------------------------------------


@dataclass(frozen=True)
class LabelRule:
    """Ground-truth preference labelling for training data.

    A task is compute-preferring when the edge model's estimated quality at
    the task's complexity falls short of its accuracy requirement (by more
    than ``margin_map``), or when a nominal cloud round trip would still meet
    the delay requirement with at least ``slack_fraction`` slack and the
    content is complex enough to benefit (>= ``min_complexity``).  The
    nominal round trip assumes ``rtt_concurrency`` concurrent WAN uploads.
    """

    margin_map: float = 0.0
    slack_fraction: float = 0.2
    rtt_concurrency: int = 1
    min_complexity: float = 0.0


@dataclass(frozen=True)
class Environment:
    """Everything the slot accounting needs to price an assignment."""

    servers: tuple
    wan: BandwidthModel
    acc_model: AccuracyModel = AccuracyModel()
    local_link_mult: float = 10.0
    slot_seconds: float = 0.1
    preproc_seconds: float = 0.014
    max_attempts: int = 3
    count_failed_slot_delay: bool = True
    retry_skip_doomed: bool = True
    retry_estimate_concurrency: int = 12
    label_rule: LabelRule = LabelRule()

    def __post_init__(self):
        edges = [s for s in self.servers if s.tier == Tier.EDGE]
        clouds = [s for s in self.servers if s.tier == Tier.CLOUD]
        if not edges or len(clouds) != 1:
            raise ConfigError("environment needs >=1 edge and exactly one cloud server")

    @property
    def edge_servers(self):
        return [s for s in self.servers if s.tier == Tier.EDGE]

    @property
    def cloud_server(self):
        return next(s for s in self.servers if s.tier == Tier.CLOUD)

    @property
    def local_link_mbps(self) -> float:
        return self.wan.base_mbps * self.local_link_mult

    def realized_accuracy(self, task: Task, server: ServerSpec) -> float:
        return realized_accuracy(task, server, self.acc_model)

    def nominal_cloud_rtt(self, data_size_mbits: float) -> float:
        share = self.wan.base_mbps / max(1, self.label_rule.rtt_concurrency)
        return (self.preproc_seconds
                + transmission_delay(data_size_mbits, share)
                + inference_delay(self.cloud_server, 1))

    def preference_label(self, task: Task) -> int:
        """1 = compute-preferring, 0 = bandwidth-preferring."""
        rule = self.label_rule
        edge_quality = self.realized_accuracy(task, self.edge_servers[0])
        if task.accuracy_req + rule.margin_map > edge_quality:
            return 1
        rtt = self.nominal_cloud_rtt(task.data_size)
        slack_ok = (rtt <= (1.0 - rule.slack_fraction) * task.delay_req
                    and task.complexity >= rule.min_complexity)
        return 1 if slack_ok else 0

    def retry_is_doomed(self, task: Task, slots_waited_after: int) -> bool:
        """True when even a prompt cloud retry cannot meet the delay budget.

        The estimate assumes ``retry_estimate_concurrency`` concurrent WAN
        uploads; burnt slots count when the environment counts them.
        """
        if not self.retry_skip_doomed:
            return False
        share = self.wan.base_mbps / max(1, self.retry_estimate_concurrency)
        est = (self.preproc_seconds
               + transmission_delay(task.data_size, share)
               + inference_delay(self.cloud_server, 1))
        if self.count_failed_slot_delay:
            est += slots_waited_after * self.slot_seconds
        return est > task.delay_req


def slot_outcome(env: Environment, scheme: AllocationScheme, tasks,
                 waited_slots=None) -> SlotOutcome:
    """Price one slot: per-task accuracy/delay/cost shares and slot totals.

    WAN bandwidth is shared evenly by that slot's cloud uploads; each edge
    server's local link (local_link_mult x WAN base) is shared by its own
    arrivals.  Slot compute U is the sum of throughput x inference-time over
    tasks, B counts WAN megabits per slot second, and energy adds working,
    idle and transmission components per server.  ``waited_slots`` carries
    each task's previously burnt slots into its total delay.
    """
    task_by_id = {v.id: v for v in tasks}
    if set(scheme.assignment) != set(task_by_id):
        raise MismatchError("scheme and task set differ")
    waited_slots = waited_slots or {}
    server_by_id = {s.id: s for s in env.servers}
    counts: dict = {}
    for tid, sid in scheme.assignment.items():
        counts[sid] = counts.get(sid, 0) + 1

    wan_bw = sample_bandwidth(env.wan, scheme.slot)
    cloud_id = env.cloud_server.id
    n_cloud = counts.get(cloud_id, 0)

    out = SlotOutcome(t=scheme.slot)
    busy: dict = {s.id: 0.0 for s in env.servers}
    tx_time: dict = {s.id: 0.0 for s in env.servers}
    for tid in sorted(scheme.assignment):
        task = task_by_id[tid]
        sid = scheme.assignment[tid]
        server = server_by_id[sid]
        if server.tier == Tier.CLOUD:
            link = wan_bw / max(1, n_cloud)
        else:
            link = env.local_link_mbps / counts[sid]
        tx = transmission_delay(task.data_size, link)
        inf = inference_delay(server, counts[sid])
        attempt_delay = env.preproc_seconds + tx + inf
        total_delay = attempt_delay
        if env.count_failed_slot_delay:
            total_delay += waited_slots.get(tid, 0) * env.slot_seconds
        acc = env.realized_accuracy(task, server)
        out.accuracy[tid] = acc
        out.delay[tid] = total_delay
        out.feasible_flags[tid] = feasible(task, acc, total_delay)
        out.u_share[tid] = server.fp16_tflops * inf
        out.b_share[tid] = (task.data_size / env.slot_seconds
                            if server.tier == Tier.CLOUD else 0.0)
        out.energy_share[tid] = server.work_power_w * inf + server.tx_power_w * tx
        busy[sid] += inf
        tx_time[sid] += tx

    out.U = sum(out.u_share.values())
    out.B = sum(out.b_share.values())
    idle = sum(
        s.idle_power_w * max(0.0, env.slot_seconds - busy[s.id]) for s in env.servers
    )
    out.energy_j = sum(out.energy_share.values()) + idle
    return out


def idle_slot_energy(env: Environment) -> float:
    return sum(s.idle_power_w for s in env.servers) * env.slot_seconds


# -- policies --------------------------------------------------------------------


class Policy:
    """Maps one slot's tasks to servers; may learn from the outcome."""

    name = "policy"

    def place(self, t: int, tasks, floors, env: Environment) -> AllocationScheme:
        raise NotImplementedError

    def observe(self, tasks, scheme: AllocationScheme, outcome: SlotOutcome,
                env: Environment) -> None:
        pass

    def regret_trace(self):
        return None


def _forced(tasks, floors):
    """Split (escalated-to-cloud, free) task lists."""
    stuck = [v for v in tasks if floors.get(v.id, Tier.EDGE) >= Tier.CLOUD]
    free = [v for v in tasks if floors.get(v.id, Tier.EDGE) < Tier.CLOUD]
    return stuck, free


class PreferenceBanditPolicy(Policy):
    """Preference-guided placement refined by the combinatorial bandit.

    Task classes extend the (preference, complexity tercile, delay tercile)
    taxonomy with an accuracy-requirement tercile so the pull against the
    cloud prior can separate genuinely accuracy-critical traffic from tasks
    that were routed cloudward for delay headroom alone.
    """

    name = "pref_bandit"

    def __init__(self, phi: float = 1.0, alpha: float = 0.9, beta: float = 0.9,
                 delay_req_range=(0.2, 0.6), acc_req_range=(50.0, 80.0),
                 class_features=None,
                 feasibility_threshold: float = 0.5,
                 cross_tier_min_plays: int = 3,
                 cross_tier_threshold: float = 0.7,
                 cross_tier_explore_period: int = 10,
                 cross_tier_min_delay_req: float = 0.0,
                 seed: int | None = None):
        self.state = BanditState(
            phi=phi, alpha=alpha, beta=beta, delay_req_range=delay_req_range,
            acc_req_range=acc_req_range,
            class_features=class_features or ("preference", "complexity", "delay", "accuracy"),
            feasibility_threshold=feasibility_threshold,
            cross_tier_min_plays=cross_tier_min_plays,
            cross_tier_threshold=cross_tier_threshold,
            cross_tier_explore_period=cross_tier_explore_period,
            cross_tier_min_delay_req=cross_tier_min_delay_req,
            seed=seed,
        )

    def place(self, t, tasks, floors, env):
        for task in tasks:
            if floors.get(task.id, Tier.EDGE) >= Tier.CLOUD:
                self.state.tier_floor[task.id] = Tier.CLOUD
        return select_super_arm(self.state, tasks, env.servers, slot=t)

    def observe(self, tasks, scheme, outcome, env):
        feedback(self.state, scheme, outcome, tasks, env.servers)

    def regret_trace(self):
        return list(self.state.regret_trace)


class BanditOnlyPolicy(PreferenceBanditPolicy):
    """Feedback optimisation without the prediction stage.

    With no preference signal, every new task's initial placement is a
    uniformly random server; the feedback mechanism still commits feasible
    placements, escalates violations to the cloud and keeps the arm
    statistics and regret trace.  Arms collapse to delay-tercile classes,
    the only taxonomy dimension the retry logic itself needs.
    """

    name = "bandit_only"

    def __init__(self, phi: float = 1.0, alpha: float = 0.9, beta: float = 0.9,
                 delay_req_range=(0.2, 0.6), acc_req_range=(50.0, 80.0),
                 feasibility_threshold: float = 0.5,
                 cross_tier_min_plays: int = 3,
                 cross_tier_threshold: float = 0.7,
                 cross_tier_explore_period: int = 10,
                 cross_tier_min_delay_req: float = 0.0,
                 seed: int | None = None):
        super().__init__(phi=phi, alpha=alpha, beta=beta,
                         delay_req_range=delay_req_range,
                         acc_req_range=acc_req_range,
                         class_features=("delay",),
                         feasibility_threshold=feasibility_threshold,
                         cross_tier_min_plays=cross_tier_min_plays,
                         cross_tier_threshold=cross_tier_threshold,
                         cross_tier_explore_period=cross_tier_explore_period,
                         cross_tier_min_delay_req=cross_tier_min_delay_req,
                         seed=seed)

    def place(self, t, tasks, floors, env):
        servers = sorted(env.servers, key=lambda s: s.id)
        cloud_id = env.cloud_server.id
        assignment = {}
        for task in sorted(tasks, key=lambda v: v.id):
            if floors.get(task.id, Tier.EDGE) >= Tier.CLOUD:
                assignment[task.id] = cloud_id
            else:
                pick = int(self.state.rng.integers(len(servers)))
                assignment[task.id] = servers[pick].id
        return AllocationScheme(assignment=assignment, slot=t)


class PreferenceOnlyPolicy(Policy):
    """Initial preference-guided placement with no bandit refinement."""

    name = "pref_only"

    def place(self, t, tasks, floors, env):
        stuck, free = _forced(tasks, floors)
        assignment = {}
        if free:
            assignment.update(initial_placement(free, env.servers, slot=t).assignment)
        cloud_id = env.cloud_server.id
        for task in stuck:
            assignment[task.id] = cloud_id
        return AllocationScheme(assignment=assignment, slot=t)


# -- run engine -------------------------------------------------------------------


@dataclass
class TaskRecord:
    """Final outcome of one task after any escalations."""

    task_id: int
    accuracy_req: float
    delay_req: float
    accuracy: float = 0.0
    delay: float = 0.0
    attempts: int = 0
    server_id: int = -1
    predicted_pref: str = "none"
    acc_ok: bool = False
    delay_ok: bool = False


@dataclass
class RunResult:
    """Full trace of one simulation run."""

    meta: dict
    records: list
    rows: list
    slots: list
    reward_trace: list
    regret_trace: list

    @property
    def objective_phi(self) -> float:
        return self.meta.get("phi", 1.0)


TRACE_COLUMNS = (
    "t", "task_id", "server_id", "predicted_pref", "feasible",
    "reward", "regret", "attempt", "accuracy", "delay",
    "accuracy_req", "delay_req", "u_share", "b_share", "energy_share", "final",
)


def predict_workload(predictor, workload: Workload, max_delay_req: float) -> dict:
    """Batch-classify every task; returns task_id -> Preference."""
    from .predictor import FEATURE_SIZE  # local import to avoid cycle at load

    tasks = workload.tasks
    horizon = workload.spec.horizon
    denom = max(1, horizon - 1)
    feats = np.zeros((len(tasks), FEATURE_SIZE))
    for i, task in enumerate(tasks):
        feats[i] = (
            task.arrival_t / denom,
            task.complexity,
            task.accuracy_req / 100.0,
            task.delay_req / max_delay_req,
        )
    seq_len = predictor.seq_len
    windows = np.zeros((len(tasks), seq_len, FEATURE_SIZE))
    for i in range(len(tasks)):
        start = max(0, i - seq_len + 1)
        chunk = feats[start:i + 1]
        windows[i, seq_len - chunk.shape[0]:, :] = chunk
    probs = predictor.forward_batch(windows)
    return {
        task.id: (Preference.COMPUTE if p >= 0.5 else Preference.BANDWIDTH)
        for task, p in zip(tasks, probs)
    }


def label_windows(workload: Workload, env: Environment, seq_len: int,
                  max_delay_req: float) -> list:
    """LabeledWindow dataset from the environment's ground-truth rule."""
    from .predictor import FEATURE_SIZE, LabeledWindow

    tasks = workload.tasks
    denom = max(1, workload.spec.horizon - 1)
    feats = np.zeros((len(tasks), FEATURE_SIZE))
    labels = np.zeros(len(tasks), dtype=int)
    for i, task in enumerate(tasks):
        feats[i] = (
            task.arrival_t / denom,
            task.complexity,
            task.accuracy_req / 100.0,
            task.delay_req / max_delay_req,
        )
        labels[i] = env.preference_label(task)
    out = []
    for i in range(len(tasks)):
        window = np.zeros((seq_len, FEATURE_SIZE))
        start = max(0, i - seq_len + 1)
        chunk = feats[start:i + 1]
        window[seq_len - chunk.shape[0]:, :] = chunk
        out.append(LabeledWindow(sequence=window, label=int(labels[i])))
    return out


def run_policy(env: Environment, workload: Workload, policy: Policy,
               predictions: dict | None = None, meta: dict | None = None,
               phi: float = 1.0, alpha: float = 0.9, beta: float = 0.9) -> RunResult:
    """Drive the slot loop: place, price, learn, escalate, finalise.

    ``predictions`` (task_id -> Preference) is applied to fresh task copies,
    so cached workloads can be shared across runs.  Tasks violating a
    requirement are retried in the next slot on a richer tier until the
    attempt cap or the cloud itself fails them; their burnt slots count
    toward the final delay when the environment says so.
    """
    tasks = [replace(task) for task in workload.tasks]
    for task in tasks:
        task.predicted_pref = (predictions or {}).get(task.id)
    horizon = workload.spec.horizon

    arrivals: dict = {}
    for task in tasks:
        arrivals.setdefault(task.arrival_t, []).append(task)

    floors: dict = {}
    waited: dict = {}
    attempts: dict = {}
    retry_queue: dict = {}
    records: dict = {}
    rows: list = []
    slots: list = []
    reward_trace: list = []
    regret_trace: list = []
    cum_reward = 0.0
    best_reward = -np.inf
    active_rounds = 0

    t = 0
    while t < horizon or retry_queue:
        batch = list(arrivals.get(t, [])) + list(retry_queue.pop(t, []))
        if not batch:
            slots.append(SlotOutcome(t=t, energy_j=idle_slot_energy(env)))
            t += 1
            continue
        batch.sort(key=lambda v: v.id)
        scheme = policy.place(t, batch, floors, env)
        outcome = slot_outcome(env, scheme, batch, waited_slots=waited)
        policy.observe(batch, scheme, outcome, env)

        active_rounds += 1
        r = -(outcome.U + phi * outcome.B)
        cum_reward += r
        best_reward = max(best_reward, r)
        regret = active_rounds * alpha * beta * best_reward - cum_reward
        reward_trace.append(r)
        regret_trace.append(regret)

        server_by_id = {s.id: s for s in env.servers}
        for task in batch:
            tid = task.id
            sid = scheme.assignment[tid]
            attempts[tid] = attempts.get(tid, 0) + 1
            feas = outcome.feasible_flags[tid]
            server = server_by_id[sid]
            can_escalate = (server.tier < Tier.CLOUD
                            and attempts[tid] < env.max_attempts
                            and not env.retry_is_doomed(task, waited.get(tid, 0) + 1))
            final = feas or not can_escalate
            rows.append({
                "t": t, "task_id": tid, "server_id": sid,
                "predicted_pref": task.predicted_pref.value if task.predicted_pref else "none",
                "feasible": feas, "reward": r, "regret": regret,
                "attempt": attempts[tid],
                "accuracy": outcome.accuracy[tid], "delay": outcome.delay[tid],
                "accuracy_req": task.accuracy_req, "delay_req": task.delay_req,
                "u_share": outcome.u_share[tid], "b_share": outcome.b_share[tid],
                "energy_share": outcome.energy_share[tid], "final": final,
            })
            if final:
                records[tid] = TaskRecord(
                    task_id=tid, accuracy_req=task.accuracy_req,
                    delay_req=task.delay_req, accuracy=outcome.accuracy[tid],
                    delay=outcome.delay[tid], attempts=attempts[tid],
                    server_id=sid,
                    predicted_pref=task.predicted_pref.value if task.predicted_pref else "none",
                    acc_ok=outcome.accuracy[tid] >= task.accuracy_req,
                    delay_ok=outcome.delay[tid] <= task.delay_req,
                )
                floors.pop(tid, None)
            else:
                floors[tid] = Tier(int(server.tier) + 1)
                waited[tid] = waited.get(tid, 0) + 1
                retry_queue.setdefault(t + 1, []).append(task)
        slots.append(outcome)
        t += 1

    meta = dict(meta or {})
    meta.setdefault("policy", policy.name)
    meta["phi"] = phi
    meta["alpha"] = alpha
    meta["beta"] = beta
    meta["horizon"] = horizon
    meta["n_tasks"] = len(tasks)
    meta["complexity_scale"] = (workload.complexity_lo, workload.complexity_hi)
    policy_regret = policy.regret_trace()
    return RunResult(
        meta=meta,
        records=[records[tid] for tid in sorted(records)],
        rows=rows,
        slots=slots,
        reward_trace=reward_trace,
        regret_trace=policy_regret if policy_regret is not None else regret_trace,
    )
