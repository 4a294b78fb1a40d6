"""Shaped step reward, per-episode success and the SR / SPL / CSR aggregates."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

from .episodes import Episode, Pose, angle_between, path_tangent
from .navigation import (
    AgentAction,
    ExecutorConfig,
    Policy,
    Status,
    Trajectory,
    execute_instruction,
)
from .scene import Scene
from .subtask import SubTask


class EmptyResultSet(ValueError):
    """An aggregate was requested over zero episodes."""


@dataclass(frozen=True)
class RewardConfig:
    success_bonus: float = 5.0
    angle_success_bonus: float = 5.0
    success_radius: float = 1.0
    angle_success_threshold: float = math.radians(25)
    atg_gate_radius: float = 1.0
    slack: float = -0.01

    def __post_init__(self):
        if self.success_radius <= 0 or self.atg_gate_radius <= 0:
            raise ValueError("reward radii must be positive")
        if not 0 < self.angle_success_threshold <= math.pi:
            raise ValueError("angle threshold must lie in (0, pi]")


@dataclass(frozen=True)
class RewardComponents:
    r_success: float
    r_angle_success: float
    neg_delta_dtg: float
    neg_delta_atg: float
    r_slack: float

    @property
    def total(self) -> float:
        return self.r_success + self.r_angle_success + self.neg_delta_dtg + self.neg_delta_atg + self.r_slack

    def to_json(self) -> dict:
        return {**asdict(self), "total": self.total}


class Reading(NamedTuple):
    """Distance (m) and angle (rad) to the goal at one pose."""

    dtg: float
    atg: float


def _delta(cur: float, prev: float) -> float:
    if math.isinf(cur) and math.isinf(prev):
        return 0.0
    return cur - prev


def step_reward(prev, cur, stopped: bool, config: RewardConfig = RewardConfig()) -> RewardComponents:
    """Reward for moving from reading ``prev`` to reading ``cur``.

    Both arguments only need ``dtg`` and ``atg`` attributes (a Reading or a
    StepRecord). The angle bonus does not require a stop; the angle change
    only counts once the agent is within the gate radius.
    """
    near = cur.dtg <= config.success_radius
    return RewardComponents(
        r_success=config.success_bonus if stopped and near else 0.0,
        r_angle_success=config.angle_success_bonus if near and cur.atg <= config.angle_success_threshold else 0.0,
        neg_delta_dtg=-_delta(cur.dtg, prev.dtg),
        neg_delta_atg=-(cur.atg - prev.atg) if cur.dtg <= config.atg_gate_radius else 0.0,
        r_slack=config.slack,
    )


def reading(scene: Scene, pose: Pose, goal: Pose) -> Reading:
    return Reading(scene.geodesic_distance(pose.position, goal.position), angle_between(pose.heading, goal.heading))


def annotate_rewards(scene: Scene, traj: Trajectory, goal: Pose, config: RewardConfig = RewardConfig()) -> list[RewardComponents]:
    """Fill dtg, atg and reward components on every step of ``traj`` in place."""
    prev = reading(scene, traj.start, goal)
    out = []
    for step in traj.steps:
        cur = reading(scene, step.pose_after, goal)
        rc = step_reward(prev, cur, step.action is AgentAction.STOP, config)
        step.dtg, step.atg, step.reward_components = cur.dtg, cur.atg, rc.to_json()
        out.append(rc)
        prev = cur
    return out


# -- success and aggregates --------------------------------------------------


def stopped(traj: Trajectory) -> bool:
    """The agent chose to end: its last step was Stop (or there was nothing to do).

    A sub-task that runs out of its step budget is switched away from by
    the executor, which is not the agent stopping.
    """
    if not traj.steps:
        return traj.status is Status.ALL_SUBTASKS_DONE
    return traj.steps[-1].action is AgentAction.STOP


def episode_success(scene: Scene, traj: Trajectory, goal: Pose, radius: float, lenient: bool = False) -> bool:
    """Stopped (unless ``lenient``) with the final position within ``radius`` geodesic of the goal."""
    if traj.status is Status.ERROR:
        return False
    if not lenient and not stopped(traj):
        return False
    return scene.geodesic_distance(traj.final_pose.position, goal.position) <= radius


@dataclass
class EpisodeResult:
    id: int | str
    scene_id: str
    action: str
    success: bool
    shortest: float
    traveled: float
    spl_term: float
    final_distance: float
    steps: int
    status: str
    error: str | None = None

    def to_json(self) -> dict:
        d = asdict(self)
        # NaN and inf are not valid JSON numbers
        return {k: None if isinstance(v, float) and not math.isfinite(v) else v for k, v in d.items()}


def spl_term(success: bool, shortest: float, traveled: float) -> float:
    if not success:
        return 0.0
    if shortest <= 0:
        return 1.0
    return shortest / max(traveled, shortest)


def success_rate(results: Sequence[EpisodeResult]) -> float:
    if not results:
        raise EmptyResultSet("no episodes to aggregate")
    return 100.0 * sum(r.success for r in results) / len(results)


def spl(results: Sequence[EpisodeResult]) -> float:
    """Mean of success * shortest / max(traveled, shortest), as a percent."""
    if not results:
        raise EmptyResultSet("no episodes to aggregate")
    return 100.0 * sum(r.spl_term for r in results) / len(results)


def csr(sr_a: float, sr_b: float) -> float:
    """Consistency of two success rates, in percent; two zero rates count as identical."""
    if sr_a < 0 or sr_b < 0:
        raise ValueError("success rates must be non-negative")
    top = max(sr_a, sr_b)
    if top == 0:
        return 100.0
    return (1.0 - abs(sr_a - sr_b) / top) * 100.0


@dataclass
class EvalResult:
    episodes: list[EpisodeResult] = field(default_factory=list)

    @property
    def sr(self) -> float:
        return success_rate(self.episodes)

    @property
    def spl(self) -> float:
        return spl(self.episodes)

    def by_action(self) -> dict[str, EvalResult]:
        groups: dict[str, EvalResult] = {}
        for r in self.episodes:
            groups.setdefault(r.action, EvalResult()).episodes.append(r)
        return groups

    def to_report(self, csr_pairs: Mapping[str, tuple[float, float]] | None = None) -> dict:
        report = {
            "episodes": [r.to_json() for r in self.episodes],
            "aggregate": {"count": len(self.episodes), "SR": self.sr, "SPL": self.spl},
            "by_action": {k: {"count": len(v.episodes), "SR": v.sr, "SPL": v.spl} for k, v in sorted(self.by_action().items())},
        }
        if csr_pairs:
            report["aggregate"]["CSR"] = {name: csr(a, b) for name, (a, b) in sorted(csr_pairs.items())}
        return report


def write_report(fh, report: dict) -> None:
    json.dump(report, fh, indent=2, sort_keys=True)
    fh.write("\n")


def report_sr(report: Mapping) -> float:
    """Aggregate SR of a report document; accepts a bare ``{"SR": x}`` too."""
    if "aggregate" in report:
        return float(report["aggregate"]["SR"])
    return float(report["SR"])


# -- evaluation --------------------------------------------------------------


def episode_target(ep: Episode) -> Pose:
    """Where an episode's route ends, which is what a sub-task run is scored against.

    For GoTo, GoInto and Exit this is the goal pose itself. GoPast and
    GoThrough place their goal pose mid-route, so the target is the path
    end facing along the final path segment.
    """
    if ep.goal.position == ep.path_end:
        return ep.goal
    return Pose(ep.path_end, path_tangent(ep.path, len(ep.path) - 1))


PolicyFactory = Callable[[Episode], Policy]


def run_episode(
    scene: Scene,
    ep: Episode,
    policy: Policy,
    config: ExecutorConfig = ExecutorConfig(),
    reward: RewardConfig | None = RewardConfig(),
) -> Trajectory:
    target = episode_target(ep)
    traj = execute_instruction(
        scene, ep.start, [SubTask(ep.action, ep.landmark)], policy, config, goal=target, trajectory_id=str(ep.id)
    )
    if reward is not None:
        annotate_rewards(scene, traj, target, reward)
    return traj


def evaluate(
    episodes: Iterable[Episode],
    scenes: Mapping[str, Scene],
    policy: Policy | PolicyFactory,
    config: ExecutorConfig = ExecutorConfig(),
    lenient: bool = False,
) -> EvalResult:
    """Run and score every episode; failures are recorded per episode, never raised.

    ``policy`` is either a policy object shared by all episodes or a
    factory called once per episode (so seeded policies stay independent
    of evaluation order). Results are ordered by (scene id, episode id).
    """
    factory = policy if not hasattr(policy, "step") else (lambda ep: policy)
    results = []
    for ep in episodes:
        scene = scenes.get(ep.scene_id)
        if scene is None:
            results.append(EpisodeResult(ep.id, ep.scene_id, ep.action.value, False, math.nan, 0.0, 0.0, math.nan, 0,
                                         Status.ERROR.value, f"unknown scene {ep.scene_id!r}"))
            continue
        target = episode_target(ep)
        shortest = scene.geodesic_distance(ep.start.position, target.position)
        try:
            traj = run_episode(scene, ep, factory(ep), config, reward=None)
        except Exception as exc:  # one broken episode must not sink the batch
            results.append(EpisodeResult(ep.id, ep.scene_id, ep.action.value, False, shortest, 0.0, 0.0, math.nan, 0,
                                         Status.ERROR.value, f"{type(exc).__name__}: {exc}"))
            continue
        ok = episode_success(scene, traj, target, config.success_radius, lenient)
        traveled = traj.traveled
        results.append(
            EpisodeResult(
                ep.id, ep.scene_id, ep.action.value, ok, shortest, traveled, spl_term(ok, shortest, traveled),
                scene.geodesic_distance(traj.final_pose.position, target.position), len(traj.steps),
                traj.status.value, traj.error,
            )
        )
    results.sort(key=lambda r: (r.scene_id, str(r.id) if isinstance(r.id, str) else f"{r.id:012d}"))
    if not results:
        raise EmptyResultSet("no episodes to evaluate")
    return EvalResult(results)
