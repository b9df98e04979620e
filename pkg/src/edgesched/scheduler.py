"""Combinatorial-bandit allocation of tasks to edge and cloud servers.

One slot's assignment of every task to exactly one server is a super arm;
the learnable unit (base arm) is a (task-class, server) pair, where a task
class combines the predicted preference with complexity and delay-requirement
terciles so statistics accumulate across rounds.  Selection is
preference-constrained combinatorial UCB: each candidate server is scored by
an optimistic (lower-confidence) cost estimate, screened by its empirical
feasibility record and the slot's tentative load, and the preferred tier is
consulted first.  Violating tasks are escalated to a richer tier for their
next attempt, mirroring the constraint handling of the slot objective
(1/T) sum_t (U_t + phi * B_t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from .errors import (
    EmptyHistoryError,
    MismatchError,
    NoServerError,
    RangeError,
)

EXPLORATION_COEFF = 1.5


class Preference(Enum):
    COMPUTE = "compute"
    BANDWIDTH = "bandwidth"


class Tier(IntEnum):
    EDGE = 0
    CLOUD = 1


@dataclass
class Task:
    """One inference request: requirements, payload size and arrival slot."""

    id: int
    arrival_t: int
    data_size: float          # megabits
    accuracy_req: float       # mAP points
    delay_req: float          # seconds
    complexity: float = 0.0   # scaled to [0, 1]
    predicted_pref: Preference | None = None

    def __post_init__(self):
        if not 0.0 <= self.accuracy_req <= 100.0:
            raise RangeError(f"accuracy_req {self.accuracy_req} outside [0, 100]")
        if self.delay_req <= 0:
            raise RangeError("delay_req must be positive")
        if self.data_size <= 0:
            raise RangeError("data_size must be positive")


@dataclass(frozen=True)
class AllocationScheme:
    """Super arm: the task -> server assignment for one slot."""

    assignment: dict
    slot: int

    def __post_init__(self):
        for tid, sid in self.assignment.items():
            if not isinstance(sid, int):
                raise MismatchError(f"task {tid} assigned non-integer server {sid!r}")


@dataclass
class SlotOutcome:
    """Realised per-task accuracy/delay and the slot's resource totals."""

    t: int
    U: float = 0.0            # tera-FLOP consumed this slot
    B: float = 0.0            # WAN megabits/s averaged over the slot
    energy_j: float = 0.0
    accuracy: dict = field(default_factory=dict)
    delay: dict = field(default_factory=dict)
    feasible_flags: dict = field(default_factory=dict)
    u_share: dict = field(default_factory=dict)
    b_share: dict = field(default_factory=dict)
    energy_share: dict = field(default_factory=dict)

    def task_cost(self, task_id: int, phi: float) -> float:
        return self.u_share.get(task_id, 0.0) + phi * self.b_share.get(task_id, 0.0)


def objective(outcomes, phi: float) -> float:
    """Time-averaged weighted consumption (1/T) sum_t (U_t + phi * B_t)."""
    if not outcomes:
        raise EmptyHistoryError("objective needs at least one slot")
    if phi < 0:
        raise RangeError("phi must be non-negative")
    return sum(o.U + phi * o.B for o in outcomes) / len(outcomes)


def reward(outcomes, phi: float) -> float:
    """Super-arm reward: the negated objective (larger is better)."""
    return -objective(outcomes, phi)


def feasible(task: Task, accuracy: float, delay: float) -> bool:
    """C1 and C2: requirement boundaries count as met."""
    return accuracy >= task.accuracy_req and delay <= task.delay_req


def _split_tiers(servers):
    edges = sorted((s for s in servers if s.tier == Tier.EDGE), key=lambda s: s.id)
    clouds = [s for s in servers if s.tier == Tier.CLOUD]
    if not edges:
        raise NoServerError("no edge server in catalog")
    if len(clouds) != 1:
        raise NoServerError(f"expected exactly one cloud server, got {len(clouds)}")
    return edges, clouds[0]


def initial_placement(tasks, servers, slot: int = 0) -> AllocationScheme:
    """Preference-guided starting assignment.

    Bandwidth-preferring tasks go to the least-loaded edge server (ties to
    the lowest id); compute-preferring tasks go to the cloud.  An unset
    prediction counts as compute-preferring, matching the tie rule of the
    classifier threshold.
    """
    edges, cloud = _split_tiers(servers)
    load = {s.id: 0 for s in edges}
    assignment = {}
    for task in sorted(tasks, key=lambda v: v.id):
        if task.predicted_pref == Preference.BANDWIDTH:
            target = min(edges, key=lambda s: (load[s.id], s.id))
            load[target.id] += 1
            assignment[task.id] = target.id
        else:
            assignment[task.id] = cloud.id
    return AllocationScheme(assignment=assignment, slot=slot)


@dataclass
class ArmStats:
    count: int = 0
    mean_cost: float = 0.0
    feasible_count: int = 0

    def update(self, cost: float, was_feasible: bool) -> None:
        self.count += 1
        self.mean_cost += (cost - self.mean_cost) / self.count
        if was_feasible:
            self.feasible_count += 1

    @property
    def feasibility_rate(self) -> float:
        return self.feasible_count / self.count if self.count else 1.0


DEFAULT_CLASS_FEATURES = ("preference", "complexity", "delay")


class BanditState:
    """Arm statistics, escalation floors and the regret trace of one run.

    Class features are configurable: without the prediction stage the
    preference bit and the complexity estimate are unavailable, so a run can
    collapse to delay-tercile-only classes.  alpha and beta are the
    approximation coefficients of the regret definition; exactly 1.0 is
    accepted for exact-regret checks.
    """

    def __init__(self, phi: float = 1.0, alpha: float = 0.9, beta: float = 0.9,
                 delay_req_range=(0.2, 0.6), acc_req_range=(50.0, 80.0),
                 class_features=DEFAULT_CLASS_FEATURES,
                 feasibility_threshold: float = 0.5,
                 feasibility_min_plays: int = 3,
                 cross_tier_min_plays: int = 3,
                 cross_tier_threshold: float = 0.7,
                 cross_tier_explore_period: int = 10,
                 cross_tier_min_delay_req: float = 0.0,
                 seed: int | None = None):
        if not (0.0 < alpha <= 1.0 and 0.0 < beta <= 1.0):
            raise RangeError("alpha and beta must lie in (0, 1]")
        if phi < 0:
            raise RangeError("phi must be non-negative")
        self.phi = phi
        self.alpha = alpha
        self.beta = beta
        self.delay_req_range = tuple(delay_req_range)
        self.acc_req_range = tuple(acc_req_range)
        self.class_features = tuple(class_features)
        self.feasibility_threshold = feasibility_threshold
        self.feasibility_min_plays = feasibility_min_plays
        self.cross_tier_min_plays = cross_tier_min_plays
        self.cross_tier_threshold = cross_tier_threshold
        self.cross_tier_explore_period = cross_tier_explore_period
        self.cross_tier_min_delay_req = cross_tier_min_delay_req
        self.arms: dict = {}
        self.tier_floor: dict = {}
        self.tier_evidence: dict = {}
        self.T = 0
        self.cum_reward = 0.0
        self.best_slot_reward = -math.inf
        self.regret_trace: list = []
        self.reward_trace: list = []
        self.rng = np.random.default_rng(seed)

    # -- task classes ---------------------------------------------------------

    @staticmethod
    def _tercile(x: float) -> int:
        return min(2, max(0, int(x * 3.0)))

    def class_key(self, task: Task, pref: Preference | None) -> tuple:
        key = []
        d_lo, d_hi = self.delay_req_range
        d_span = d_hi - d_lo if d_hi > d_lo else 1.0
        a_lo, a_hi = self.acc_req_range
        a_span = a_hi - a_lo if a_hi > a_lo else 1.0
        for feature in self.class_features:
            if feature == "preference":
                key.append(pref.value if pref is not None else "none")
            elif feature == "complexity":
                key.append(self._tercile(task.complexity))
            elif feature == "delay":
                key.append(self._tercile((task.delay_req - d_lo) / d_span))
            elif feature == "accuracy":
                key.append(self._tercile((task.accuracy_req - a_lo) / a_span))
            else:
                raise RangeError(f"unknown class feature {feature!r}")
        return tuple(key)

    def arm(self, class_key: tuple, server_id: int) -> ArmStats:
        return self.arms.setdefault((class_key, server_id), ArmStats())

    def _evidence_cell(self, task: Task, tier: Tier) -> tuple:
        a_lo, a_hi = self.acc_req_range
        a_span = a_hi - a_lo if a_hi > a_lo else 1.0
        return (self._tercile(task.complexity),
                self._tercile((task.accuracy_req - a_lo) / a_span),
                int(tier))

    def record_tier_evidence(self, task: Task, tier: Tier, was_feasible: bool) -> None:
        cell = self.tier_evidence.setdefault(self._evidence_cell(task, tier), [0, 0])
        cell[0] += 1
        if was_feasible:
            cell[1] += 1

    def tier_proven(self, task: Task, tier: Tier) -> bool:
        """Enough cross-class evidence that this tier serves such tasks."""
        cell = self.tier_evidence.get(self._evidence_cell(task, tier))
        if cell is None or cell[0] < self.cross_tier_min_plays:
            return False
        return cell[1] / cell[0] >= self.cross_tier_threshold

    def _arm_allowed(self, class_key: tuple, server_id: int) -> bool:
        stats = self.arm(class_key, server_id)
        if stats.count < self.feasibility_min_plays:
            return True
        return stats.feasibility_rate >= self.feasibility_threshold

    def _score(self, class_key: tuple, server_id: int, t_round: int) -> float:
        stats = self.arm(class_key, server_id)
        bonus = math.sqrt(EXPLORATION_COEFF * math.log(max(t_round, 2)) / stats.count)
        return stats.mean_cost - bonus


def select_super_arm(state: BanditState, tasks, servers, predictions=None,
                     slot: int = 0) -> AllocationScheme:
    """Pick one server per task by preference-constrained combinatorial UCB.

    Per task: candidate servers are taken from the preferred tier first
    (all tiers pooled when no preference is available), screened by the
    slot's tentative load and by each arm's feasibility record.  Unplayed
    arms are taken before scored ones, so the first round reproduces the
    preference-guided initial placement; afterwards the lowest
    mean - sqrt(1.5 ln T / n) estimate wins, with ties broken by tentative
    load and then server id.

    The preferred tier is a prior, not a cage: on a deterministic cadence a
    class explores one unplayed arm of the other tier, and an other-tier
    arm that has proven itself (enough plays, near-perfect feasibility) may
    win the score comparison outright.  Escalated tasks only see tiers
    above the one that failed them.
    """
    edges, cloud = _split_tiers(servers)
    all_servers = edges + [cloud]
    tentative = {s.id: 0 for s in all_servers}
    tentative_class_plays: dict = {}
    t_round = state.T + 1
    assignment = {}

    def pick(pool, key, pref):
        """Unplayed-first, then scored; returns (server, was_scored)."""
        open_servers = [s for s in pool if tentative[s.id] < s.max_concurrency]
        eligible = [s for s in open_servers if state._arm_allowed(key, s.id)]
        if not eligible:
            return None, False
        unplayed = [s for s in eligible if state.arm(key, s.id).count == 0]
        if unplayed:
            if pref is None and len(unplayed) > 1:
                return unplayed[int(state.rng.integers(len(unplayed)))], False
            return min(unplayed, key=lambda s: (tentative[s.id], s.id)), False
        scored = min(
            eligible,
            key=lambda s: (state._score(key, s.id, t_round), tentative[s.id], s.id),
        )
        return scored, True

    for task in sorted(tasks, key=lambda v: v.id):
        pref = task.predicted_pref
        if predictions is not None and task.id in predictions:
            pref = predictions[task.id]
        key = state.class_key(task, pref)
        floor = state.tier_floor.get(task.id, Tier.EDGE)

        if floor >= Tier.CLOUD:
            pools = [[cloud]]
        elif pref is Preference.BANDWIDTH:
            pools = [edges, [cloud]]
        elif pref is Preference.COMPUTE:
            pools = [[cloud], edges]
        else:
            pools = [all_servers]

        choice = None
        was_scored = False
        for rank, pool in enumerate(pools):
            choice, was_scored = pick(pool, key, pref)
            if choice is not None:
                preferred_rank = rank
                break

        if (choice is not None and preferred_rank == 0 and len(pools) > 1
                and pref is Preference.COMPUTE
                and task.delay_req >= state.cross_tier_min_delay_req
                and state.tier_proven(task, Tier.EDGE)):
            # Pull against the cloud prior: the preference over-provisions
            # tasks whose delay budget tolerates a failed cheap-tier attempt.
            # Once cross-class evidence shows the edge serves this
            # (complexity, accuracy-requirement) population, the cheap tier
            # competes on equal terms and usually wins on cost.
            merged, merged_scored = pick(pools[0] + pools[1], key, pref)
            if merged is not None:
                choice, was_scored = merged, merged_scored

        if choice is None:
            # Everything screened out: fall back to the richest tier, least
            # loaded first, ignoring the feasibility screen.
            fallback = [cloud] + edges if floor < Tier.CLOUD else [cloud]
            choice = min(fallback, key=lambda s: (-int(s.tier), tentative[s.id], s.id))
        tentative[choice.id] += 1
        tentative_class_plays[key] = tentative_class_plays.get(key, 0) + 1
        assignment[task.id] = choice.id
    return AllocationScheme(assignment=assignment, slot=slot)


def feedback(state: BanditState, scheme: AllocationScheme, outcome: SlotOutcome,
             tasks, servers) -> BanditState:
    """Fold one slot's outcome back into the bandit.

    Feasible tasks are committed (their escalation floor is dropped);
    violating tasks are floored at the next richer tier for their retry.
    Every played base arm absorbs the task's attributed cost, and the slot
    reward and approximate regret are appended to the traces.
    """
    task_by_id = {v.id: v for v in tasks}
    if set(scheme.assignment) != set(task_by_id):
        raise MismatchError("scheme and task set differ")
    missing = set(scheme.assignment) - set(outcome.feasible_flags)
    if missing:
        raise MismatchError(f"outcome lacks tasks {sorted(missing)}")
    server_by_id = {s.id: s for s in servers}

    for tid in sorted(scheme.assignment):
        task = task_by_id[tid]
        sid = scheme.assignment[tid]
        server = server_by_id[sid]
        key = state.class_key(task, task.predicted_pref)
        cost = outcome.task_cost(tid, state.phi)
        was_feasible = bool(outcome.feasible_flags[tid])
        state.arm(key, sid).update(cost, was_feasible)
        state.record_tier_evidence(task, server.tier, was_feasible)
        if was_feasible:
            state.tier_floor.pop(tid, None)
        elif server.tier < Tier.CLOUD:
            state.tier_floor[tid] = Tier(int(server.tier) + 1)
        else:
            state.tier_floor[tid] = Tier.CLOUD

    state.T += 1
    r = -(outcome.U + state.phi * outcome.B)
    state.cum_reward += r
    if r > state.best_slot_reward:
        state.best_slot_reward = r
    state.reward_trace.append(r)
    state.regret_trace.append(approximate_regret(state, state.best_slot_reward))
    return state


def approximate_regret(state: BanditState, R_max: float) -> float:
    """Reg(T) = T * alpha * beta * R_max - sum of collected slot rewards."""
    return state.T * state.alpha * state.beta * R_max - state.cum_reward
