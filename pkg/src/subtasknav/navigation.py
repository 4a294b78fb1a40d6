"""Agent kinematics, per-action oracle navigators, baselines and the sub-task executor.

The oracle navigators plan on the full occupancy map. They stand in for
learned policies: each one realizes where its action demand expects the
agent to end up relative to the landmark.
"""
from __future__ import annotations

import enum
import json
import math
import random
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .episodes import ActionKind, Pose, angle_between, normalize_heading
from .scene import GridPoint, Region, Scene, SceneError, Unreachable, WorldPoint
from .subtask import SubTask

FORWARD_STEP = 0.25
TURN_ANGLE = math.radians(30)
AGENT_RADIUS = 0.1
ARRIVAL_RADIUS = 0.25
DEAD_BAND = math.radians(15)
LOOKAHEAD = 2.0
MIN_CARRY = 1.5  # meters a GoPast route continues beyond its landmark, at least
SUBTASK_RADIUS = 1.0  # sub-task success radius the stop points are chosen for


class AgentAction(enum.Enum):
    STOP = "Stop"
    FORWARD = "Forward"
    TURN_LEFT = "TurnLeft"
    TURN_RIGHT = "TurnRight"


class LandmarkNotFound(SceneError):
    """No object or region in the scene matches the landmark text."""


# -- kinematics --------------------------------------------------------------


def _segment_rect_distance(ax, ay, bx, by, x0, y0, x1, y1) -> float:
    """Distance between segment a-b and the axis-aligned rectangle [x0,x1]x[y0,y1]."""

    def point_rect(px, py):
        dx = max(x0 - px, 0.0, px - x1)
        dy = max(y0 - py, 0.0, py - y1)
        return math.hypot(dx, dy)

    def point_seg(px, py):
        vx, vy = bx - ax, by - ay
        n2 = vx * vx + vy * vy
        t = 0.0 if n2 == 0 else min(1.0, max(0.0, ((px - ax) * vx + (py - ay) * vy) / n2))
        return math.hypot(px - ax - t * vx, py - ay - t * vy)

    # Liang-Barsky clip: does the segment enter the rectangle at all?
    t0, t1 = 0.0, 1.0
    dx, dy = bx - ax, by - ay
    hit = True
    for p, q in ((-dx, ax - x0), (dx, x1 - ax), (-dy, ay - y0), (dy, y1 - ay)):
        if p == 0:
            if q < 0:
                hit = False
                break
        else:
            t = q / p
            if p < 0:
                t0 = max(t0, t)
            else:
                t1 = min(t1, t)
            if t0 > t1:
                hit = False
                break
    if hit:
        return 0.0
    return min(
        point_rect(ax, ay),
        point_rect(bx, by),
        point_seg(x0, y0),
        point_seg(x0, y1),
        point_seg(x1, y0),
        point_seg(x1, y1),
    )


def swept_clear(scene: Scene, a: WorldPoint, b: WorldPoint, radius: float = AGENT_RADIUS) -> bool:
    """True when a disc of ``radius`` sliding from a to b touches no blocked or out-of-grid cell."""
    grid = scene.grid
    r = grid.resolution
    ox, oy = grid.origin.x, grid.origin.y
    c0 = math.floor((min(a.x, b.x) - radius - ox) / r)
    c1 = math.floor((max(a.x, b.x) + radius - ox) / r)
    r0 = math.floor((min(a.y, b.y) - radius - oy) / r)
    r1 = math.floor((max(a.y, b.y) + radius - oy) / r)
    for row in range(r0, r1 + 1):
        for col in range(c0, c1 + 1):
            if 0 <= row < grid.height and 0 <= col < grid.width and grid.free[row, col]:
                continue
            x0, y0 = ox + col * r, oy + row * r
            if _segment_rect_distance(a.x, a.y, b.x, b.y, x0, y0, x0 + r, y0 + r) < radius - 1e-12:
                return False
    return True


def apply_action(scene: Scene, pose: Pose, action: AgentAction) -> Pose:
    if action is AgentAction.FORWARD:
        p = pose.position
        q = WorldPoint(p.x + FORWARD_STEP * math.cos(pose.heading), p.y + FORWARD_STEP * math.sin(pose.heading))
        return Pose(q, pose.heading) if swept_clear(scene, p, q) else pose
    if action is AgentAction.TURN_LEFT:
        return Pose(pose.position, pose.heading + TURN_ANGLE)
    if action is AgentAction.TURN_RIGHT:
        return Pose(pose.position, pose.heading - TURN_ANGLE)
    return pose


def bearing(a: WorldPoint, b: WorldPoint) -> float:
    return normalize_heading(math.atan2(b.y - a.y, b.x - a.x))


def signed_error(target: float, heading: float) -> float:
    """Wrapped target - heading in (-pi, pi]."""
    d = math.fmod(target - heading, 2 * math.pi)
    if d <= -math.pi:
        d += 2 * math.pi
    elif d > math.pi:
        d -= 2 * math.pi
    return d


# -- waypoint following ------------------------------------------------------


def _descend(scene: Scene, start: GridPoint, target: GridPoint, max_cells: int) -> list[GridPoint]:
    """First ``max_cells`` cells of a shortest path from start toward target."""
    grid = scene.grid
    f = scene.distance_field(target)
    cur = grid.index(start)
    goal = grid.index(target)
    w = grid.width
    tx, ty = target.col, target.row
    out = []
    adjacency = scene._adjacency
    while cur != goal and len(out) < max_cells:
        dcur = f[cur]
        best_key, best = math.inf, -1
        for n, cost in adjacency[cur]:
            if abs(f[n] + cost - dcur) < 1e-9:
                row, col = divmod(n, w)
                key = math.hypot(col - tx, row - ty)
                if key < best_key - 1e-12:
                    best_key, best = key, n
        if best < 0:
            break
        cur = best
        out.append(GridPoint(*divmod(cur, w)))
    return out


def _aim_point(scene: Scene, pose: Pose, waypoint: WorldPoint) -> WorldPoint:
    grid = scene.grid
    here = grid.to_grid(pose.position)
    there = grid.to_grid(waypoint)
    if math.isinf(scene.geodesic_cells(here, there)):
        raise Unreachable(f"waypoint ({waypoint.x:.2f}, {waypoint.y:.2f}) is not reachable")
    if here == there or swept_clear(scene, pose.position, waypoint):
        if pose.position.distance(waypoint) <= LOOKAHEAD or here == there:
            return waypoint
    cells = _descend(scene, here, there, int(LOOKAHEAD / grid.resolution) + 1)
    points = [grid.to_world(c) for c in cells]
    if cells and cells[-1] == there:
        points[-1] = waypoint
    for p in reversed(points):
        if swept_clear(scene, pose.position, p):
            return p
    # nothing visible from an off-centre position: recentre on the current cell first
    centre = grid.to_world(here)
    if pose.position.distance(centre) > 1e-9:
        return centre
    return points[0] if points else waypoint


def waypoint_follow(scene: Scene, pose: Pose, waypoint: WorldPoint) -> AgentAction:
    """One control step toward ``waypoint`` along the map's shortest path.

    Stops within ARRIVAL_RADIUS. Otherwise the controller considers the
    twelve headings reachable by turning and picks the one closest to the
    bearing of the local aim point among those whose forward step is clear
    and makes progress. In open space this is the usual dead-band rule:
    move forward while the bearing error is at most DEAD_BAND, else turn
    toward the target, turning right when it is straight behind.
    """
    if pose.position.distance(waypoint) <= ARRIVAL_RADIUS:
        return AgentAction.STOP
    aim = _aim_point(scene, pose, waypoint)
    if aim.distance(pose.position) < 1e-9:
        aim = waypoint
    target = bearing(pose.position, aim)
    best = None
    for k in (0, -1, 1, -2, 2, -3, 3, -4, 4, -5, 5, -6):
        h = pose.heading + k * TURN_ANGLE
        err = abs(signed_error(target, h))
        if err >= math.pi / 2:
            continue
        if apply_action(scene, Pose(pose.position, h), AgentAction.FORWARD).position == pose.position:
            continue
        if best is None or err < best[0] - 1e-9:
            best = (err, k)
    if best is None:
        # boxed in: rotate and look again
        err = signed_error(target, pose.heading)
        return AgentAction.TURN_LEFT if 0 < err < math.pi - 1e-9 else AgentAction.TURN_RIGHT
    k = best[1]
    if k == 0:
        return AgentAction.FORWARD
    return AgentAction.TURN_LEFT if k > 0 else AgentAction.TURN_RIGHT


# -- landmark resolution -----------------------------------------------------


def _matches(label: str, text: str) -> bool:
    a, b = label.strip().lower(), text.strip().lower()
    return a == b or (len(a) >= 3 and a in b) or (len(b) >= 3 and b in a)


def matching_objects(scene: Scene, text: str):
    exact = scene.objects_labeled(text)
    return exact or [o for o in scene.objects if _matches(o.label, text)]


def matching_regions(scene: Scene, text: str) -> list[Region]:
    exact = scene.regions_labeled(text)
    return exact or [r for r in scene.regions if _matches(r.label, text)]


def _nearest(scene: Scene, origin: WorldPoint, points: Sequence[WorldPoint]) -> WorldPoint:
    best = min(points, key=lambda p: scene.geodesic_distance(origin, p))
    if math.isinf(scene.geodesic_distance(origin, best)):
        raise Unreachable("no landmark instance is reachable")
    return best


def _coverage_point(scene: Scene, cells: Sequence[GridPoint], radius: float) -> WorldPoint:
    """Cell of ``cells`` with the most other cells of the set within ``radius`` geodesic.

    Where a goal is spread over a zone, stopping here maximizes the chance
    of ending within ``radius`` of it. Ties go to the cell nearest the
    zone centroid.
    """
    grid = scene.grid
    index = np.array([grid.index(c) for c in cells])
    pts = [grid.to_world(c) for c in cells]
    cx = sum(p.x for p in pts) / len(pts)
    cy = sum(p.y for p in pts) / len(pts)
    best_key, best = None, pts[0]
    for c, p in zip(cells, pts):
        covered = int(np.count_nonzero(scene.distance_field(c)[index] * grid.resolution <= radius + 1e-9))
        key = (-covered, math.hypot(p.x - cx, p.y - cy), p.y, p.x)
        if best_key is None or key < best_key:
            best_key, best = key, p
    return best


def region_anchor(scene: Scene, region: Region, margin: float = 0.5) -> WorldPoint:
    """Interior stop point of a region.

    Among free cells at least ``margin`` inside the bbox (all region cells
    if none are that deep) it picks the one covering most of the region
    within the sub-task success radius.
    """
    memo = scene.__dict__.setdefault("_anchor_memo", {})
    key = (region.id, margin)
    if key not in memo:
        cells = scene.region_cells(region)
        if not cells:
            raise LandmarkNotFound(f"region {region.id!r} has no free cells")
        b = region.bbox
        deep = []
        for c in cells:
            p = scene.grid.to_world(c)
            if min(p.x - b.xmin, b.xmax - p.x, p.y - b.ymin, b.ymax - p.y) >= margin:
                deep.append(c)
        best = _coverage_point(scene, cells, SUBTASK_RADIUS)
        if deep and scene.grid.to_grid(best) not in set(deep):
            best = _coverage_point(scene, deep, SUBTASK_RADIUS)
        memo[key] = best
    return memo[key]


def _outward(region: Region, entrance) -> tuple[float, float]:
    b = region.bbox
    m = entrance.midpoint
    sides = [
        (m.x - b.xmin, (-1.0, 0.0)),
        (b.xmax - m.x, (1.0, 0.0)),
        (m.y - b.ymin, (0.0, -1.0)),
        (b.ymax - m.y, (0.0, 1.0)),
    ]
    return min(sides, key=lambda s: s[0])[1]


def exit_point(scene: Scene, region: Region, entrance_idx: int, radius: float = 1.5) -> WorldPoint:
    """Typical spot just outside an entrance.

    The outside cell within ``radius`` geodesic of the entrance midpoint
    that covers most of that zone; falls back to half a meter past the
    doorway along its outward normal.
    """
    memo = scene.__dict__.setdefault("_exit_memo", {})
    key = (region.id, entrance_idx, radius)
    if key in memo:
        return memo[key]
    grid = scene.grid
    e = region.entrances[entrance_idx]
    f = scene.distance_field(grid.to_grid(e.midpoint)) * grid.resolution
    zone = [
        g for g in grid.free_cells()
        if f[grid.index(g)] < radius and not region.bbox.contains(grid.to_world(g))
    ]
    if zone:
        memo[key] = _coverage_point(scene, zone, SUBTASK_RADIUS)
    else:
        nx, ny = _outward(region, e)
        memo[key] = _nearest_free(scene, WorldPoint(e.midpoint.x + 0.5 * nx, e.midpoint.y + 0.5 * ny), e.midpoint, 2.0)
    return memo[key]


def past_point(scene: Scene, here: WorldPoint, landmark: WorldPoint, heading: float = 0.0) -> WorldPoint:
    """Where a route that passes ``landmark`` halfway is expected to end.

    Candidates are cells that lie as far beyond the landmark as ``here`` lies
    before it (at least MIN_CARRY) on a shortest route through the
    landmark; the stop point is the candidate covering most of them within
    the sub-task success radius. Without candidates the route is mirrored
    straight through the landmark.
    """
    grid = scene.grid
    res = grid.resolution
    s, m = grid.to_grid(here), grid.to_grid(landmark)
    approach = scene.geodesic_cells(s, m)
    carry = max(MIN_CARRY / res, approach)
    fs = scene.distance_field(s)
    fm = scene.distance_field(m)
    with np.errstate(invalid="ignore"):
        through = np.abs(fs - (approach + fm)) < 1e-6
    ring = np.abs(fm - carry) <= 1.0
    idx = np.nonzero(through & ring & grid.free.ravel())[0]
    if idx.size:
        return _coverage_point(scene, [grid.cell(i) for i in idx], SUBTASK_RADIUS)
    if here.distance(landmark) > 1e-9:
        heading = bearing(here, landmark)
    d = carry * res
    ideal = WorldPoint(landmark.x + d * math.cos(heading), landmark.y + d * math.sin(heading))
    return _nearest_free(scene, ideal, landmark, 1.25 * d)


def _nearest_free(scene: Scene, target: WorldPoint, origin: WorldPoint, max_geodesic: float) -> WorldPoint:
    """Reachable free cell closest (euclidean) to ``target`` within ``max_geodesic`` of ``origin``."""
    grid = scene.grid
    f = scene.distance_field(grid.to_grid(origin)) * grid.resolution
    ok = np.isfinite(f) & (f <= max_geodesic + 1e-9)
    idx = np.nonzero(ok)[0]
    if idx.size == 0:
        return origin
    rows, cols = np.divmod(idx, grid.width)
    xs = grid.origin.x + (cols + 0.5) * grid.resolution
    ys = grid.origin.y + (rows + 0.5) * grid.resolution
    d = np.hypot(xs - target.x, ys - target.y)
    k = int(np.argmin(d))
    return WorldPoint(float(xs[k]), float(ys[k]))


# -- observations, policies --------------------------------------------------


@dataclass
class Observation:
    pose: Pose
    scene: Scene
    subtask: SubTask
    steps_in_subtask: int
    subtask_index: int = 0
    history: Sequence["StepRecord"] = ()


class Policy(Protocol):
    def step(self, obs: Observation, state: dict) -> AgentAction | Pose:
        """Next action for the current sub-task. Returning a Pose relocates the agent."""


class _WaypointChain:
    """Follow a list of waypoints; report STOP once the last one is reached."""

    @staticmethod
    def step(scene: Scene, pose: Pose, chain: list[WorldPoint]) -> AgentAction:
        while chain:
            act = waypoint_follow(scene, pose, chain[0])
            if act is not AgentAction.STOP:
                return act
            chain.pop(0)
        return AgentAction.STOP


def oracle_waypoints(kind: ActionKind, scene: Scene, pose: Pose, landmark: str) -> list[WorldPoint]:
    """Waypoint chain that realizes ``kind`` relative to ``landmark`` from ``pose``."""
    here = pose.position
    if kind in (ActionKind.GO_TO, ActionKind.GO_PAST):
        objects = matching_objects(scene, landmark)
        if objects:
            target = _nearest(scene, here, [o.position for o in objects])
        else:
            regions = matching_regions(scene, landmark)
            if not regions:
                raise LandmarkNotFound(f"no object or region matches {landmark!r}")
            target = _nearest(scene, here, [region_anchor(scene, r) for r in regions])
        if kind is ActionKind.GO_TO:
            return [target]
        return [target, past_point(scene, here, target, pose.heading)]

    regions = matching_regions(scene, landmark)
    if not regions:
        raise LandmarkNotFound(f"no region matches {landmark!r}")
    region = min(regions, key=lambda r: scene.geodesic_distance(here, region_anchor(scene, r)))
    inside = region.bbox.contains(here)
    if not region.entrances:
        if kind is ActionKind.GO_INTO:
            return [region_anchor(scene, region)]
        raise Unreachable(f"region {region.id!r} has no entrance")
    order = sorted(
        range(len(region.entrances)),
        key=lambda i: (scene.geodesic_distance(here, region.entrances[i].midpoint), i),
    )

    if kind is ActionKind.GO_INTO:
        anchor = region_anchor(scene, region)
        return [anchor] if inside else [region.entrances[order[0]].midpoint, anchor]

    if kind is ActionKind.EXIT:
        if not inside:
            return []
        i = order[0]
        return [region.entrances[i].midpoint, exit_point(scene, region, i)]

    # GoThrough: enter by the nearest entrance, leave by the one farthest from it
    if inside:
        j = order[-1]
        return [region.entrances[j].midpoint, exit_point(scene, region, j)]
    i = order[0]
    a = region.entrances[i].midpoint
    others = [j for j in range(len(region.entrances)) if j != i]
    if not others:
        raise Unreachable(f"region {region.id!r} has a single entrance")
    j = max(others, key=lambda j: (scene.geodesic_distance(a, region.entrances[j].midpoint), -j))
    return [a, region_anchor(scene, region), region.entrances[j].midpoint, exit_point(scene, region, j)]


class OracleNavigator:
    """Map-oracle action-aware policy.

    ``kinds`` lists the action-specific navigators that are available; a
    sub-task whose kind is missing is executed by the GoTo navigator.
    """

    def __init__(self, kinds: Sequence[ActionKind] = tuple(ActionKind)):
        self.kinds = frozenset(kinds) | {ActionKind.GO_TO}

    def step(self, obs: Observation, state: dict) -> AgentAction:
        if "chain" not in state:
            kind = obs.subtask.action if obs.subtask.action in self.kinds else ActionKind.GO_TO
            state["chain"] = oracle_waypoints(kind, obs.scene, obs.pose, obs.subtask.landmark)
        return _WaypointChain.step(obs.scene, obs.pose, state["chain"])


def oracle_step(kind: ActionKind, obs: Observation, state: dict) -> AgentAction:
    if "chain" not in state:
        state["chain"] = oracle_waypoints(kind, obs.scene, obs.pose, obs.subtask.landmark)
    return _WaypointChain.step(obs.scene, obs.pose, state["chain"])


class GoToOnlyNavigator(OracleNavigator):
    """Landmark-only policy: every sub-task is treated as GoTo."""

    def __init__(self):
        super().__init__(kinds=(ActionKind.GO_TO,))


class RandomPolicy:
    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def step(self, obs: Observation, state: dict) -> AgentAction:
        return self.rng.choice(list(AgentAction))


# -- greedy (CLIP-Nav style) baseline ---------------------------------------


def _landmark_points(scene: Scene, landmark: str) -> list[WorldPoint]:
    pts = [o.position for o in matching_objects(scene, landmark)]
    for r in matching_regions(scene, landmark):
        pts.extend(scene.grid.to_world(c) for c in scene.region_cells(r))
    return pts


def direction_scores(scene: Scene, pose: Pose, landmark: str, n_views: int = 4) -> list[float]:
    """Visibility score 1/(1+geodesic) of the nearest landmark instance inside each view cone.

    Views are spread uniformly starting at the current heading; each cone
    spans 360/n_views degrees. No visible instance scores 0.
    """
    half = math.pi / n_views
    here = pose.position
    pts = _landmark_points(scene, landmark)
    f = scene.distance_field(scene.grid.to_grid(here)) * scene.grid.resolution
    best = [math.inf] * n_views
    for p in pts:
        d = float(f[scene.grid.index(scene.grid.to_grid(p))])
        if math.isinf(d):
            continue
        if p.distance(here) < 1e-9 or scene.grid.to_grid(p) == scene.grid.to_grid(here):
            views = range(n_views)
        else:
            b = bearing(here, p)
            views = [k for k in range(n_views) if abs(signed_error(b, pose.heading + 2 * half * k)) <= half + 1e-9]
        for k in views:
            best[k] = min(best[k], d)
    return [0.0 if math.isinf(d) else 1.0 / (1.0 + d) for d in best]


def backtrack(history: Sequence["StepRecord"], k: int = 15) -> Pose:
    """Pose the agent had ``k`` steps ago (clamped to the first recorded pose)."""
    if not history:
        raise ValueError("cannot backtrack an empty trajectory")
    if k <= 0:
        return history[-1].pose_after
    return history[max(0, len(history) - k)].pose_before


class GreedyBaseline:
    """Scan four views, head for a random waypoint in the best one, stop above ``threshold``."""

    def __init__(self, threshold: float = 0.8, seed: int = 0, backtrack_after: int | None = None, backtrack_steps: int = 15):
        self.threshold = threshold
        self.rng = random.Random(seed)
        self.backtrack_after = backtrack_after
        self.backtrack_steps = backtrack_steps

    def _scan(self, obs: Observation, state: dict) -> AgentAction | None:
        scores = direction_scores(obs.scene, obs.pose, obs.subtask.landmark)
        best = max(range(len(scores)), key=lambda k: (scores[k], -k))
        state["unseen"] = 0 if scores[best] > 0 else state.get("unseen", 0)
        if scores[best] > self.threshold:
            return AgentAction.STOP
        if scores[best] == 0:
            best = self.rng.randrange(len(scores))
        heading = obs.pose.heading + best * math.pi / 2
        dist = self.rng.uniform(1.0, 3.0)
        here = obs.pose.position
        ideal = WorldPoint(here.x + dist * math.cos(heading), here.y + dist * math.sin(heading))
        state["wp"] = _nearest_free(obs.scene, ideal, here, dist * 1.5)
        return None

    def step(self, obs: Observation, state: dict) -> AgentAction | Pose:
        state["unseen"] = state.get("unseen", 0) + 1
        if self.backtrack_after is not None and state["unseen"] > self.backtrack_after and obs.history:
            state.clear()
            return backtrack(obs.history, self.backtrack_steps)
        if "wp" not in state:
            stop = self._scan(obs, state)
            if stop is not None:
                return stop
        act = waypoint_follow(obs.scene, obs.pose, state["wp"])
        if act is AgentAction.STOP:
            stop = self._scan(obs, state)
            if stop is not None:
                return stop
            act = waypoint_follow(obs.scene, obs.pose, state["wp"])
            if act is AgentAction.STOP:
                del state["wp"]
                return AgentAction.TURN_LEFT
        return act


def greedy_baseline_step(obs: Observation, threshold: float, state: dict) -> AgentAction | Pose:
    policy = state.setdefault("_policy", GreedyBaseline(threshold))
    return policy.step(obs, state)


# -- executor ----------------------------------------------------------------


class Status(enum.Enum):
    ALL_SUBTASKS_DONE = "AllSubtasksDone"
    EPISODE_BUDGET_EXHAUSTED = "EpisodeBudgetExhausted"
    ERROR = "Error"


@dataclass(frozen=True)
class ExecutorConfig:
    max_subtask_steps: int = 100  # m_s
    max_episode_steps: int = 500  # m_e
    success_radius: float = 3.0

    def __post_init__(self):
        if not 0 < self.max_subtask_steps <= self.max_episode_steps:
            raise ValueError("need 0 < max_subtask_steps <= max_episode_steps")


@dataclass
class StepRecord:
    subtask_index: int
    action: AgentAction | None  # None marks a relocation (backtracking)
    pose_before: Pose
    pose_after: Pose
    dtg: float | None = None
    atg: float | None = None
    reward_components: dict | None = None

    def to_json(self) -> dict:
        return {
            "subtask_index": self.subtask_index,
            "action": self.action.value if self.action else "Relocate",
            "pose_before": self.pose_before.to_json(),
            "pose_after": self.pose_after.to_json(),
            "dtg": self.dtg,
            "atg": self.atg,
            "reward_components": self.reward_components,
        }

    @classmethod
    def from_json(cls, d: dict) -> StepRecord:
        action = None if d["action"] == "Relocate" else AgentAction(d["action"])
        return cls(
            d["subtask_index"], action, Pose.from_json(d["pose_before"]), Pose.from_json(d["pose_after"]),
            d.get("dtg"), d.get("atg"), d.get("reward_components"),
        )


@dataclass
class Trajectory:
    id: str
    start: Pose
    subtasks: tuple[SubTask, ...]
    steps: list[StepRecord] = field(default_factory=list)
    status: Status = Status.ALL_SUBTASKS_DONE
    error_subtask: int | None = None
    error: str | None = None
    scene_id: str = ""
    goal: Pose | None = None

    @property
    def final_pose(self) -> Pose:
        return self.steps[-1].pose_after if self.steps else self.start

    @property
    def traveled(self) -> float:
        return sum(s.pose_before.position.distance(s.pose_after.position) for s in self.steps)

    def actions(self) -> list[AgentAction | None]:
        return [s.action for s in self.steps]


def _dtg_atg(scene: Scene, pose: Pose, goal: Pose | None) -> tuple[float | None, float | None]:
    if goal is None:
        return None, None
    return scene.geodesic_distance(pose.position, goal.position), angle_between(pose.heading, goal.heading)


def execute_instruction(
    scene: Scene,
    start: Pose,
    subtasks: Sequence[SubTask],
    policy: Policy,
    config: ExecutorConfig = ExecutorConfig(),
    goal: Pose | None = None,
    trajectory_id: str = "",
) -> Trajectory:
    """Run sub-tasks in order.

    A sub-task ends when the policy stops or after ``max_subtask_steps``
    steps; the episode ends when every sub-task is done or after
    ``max_episode_steps`` steps. A Stop is a step. Navigator errors end the
    run with status Error and the offending sub-task index.
    """
    traj = Trajectory(trajectory_id, start, tuple(subtasks), scene_id=scene.id, goal=goal)
    pose = start
    for k, subtask in enumerate(subtasks):
        state: dict = {}
        n = 0
        while n < config.max_subtask_steps:
            if len(traj.steps) >= config.max_episode_steps:
                traj.status = Status.EPISODE_BUDGET_EXHAUSTED
                return traj
            obs = Observation(pose, scene, subtask, n, k, traj.steps)
            try:
                act = policy.step(obs, state)
            except SceneError as exc:
                traj.status = Status.ERROR
                traj.error_subtask = k
                traj.error = f"{type(exc).__name__}: {exc}"
                return traj
            if isinstance(act, Pose):
                new, action = act, None
            else:
                new, action = apply_action(scene, pose, act), act
            dtg, atg = _dtg_atg(scene, new, goal)
            traj.steps.append(StepRecord(k, action, pose, new, dtg, atg))
            pose = new
            n += 1
            if action is AgentAction.STOP:
                break
    traj.status = Status.ALL_SUBTASKS_DONE
    return traj


def replay(scene: Scene, traj: Trajectory) -> list[Pose]:
    """Re-apply a trajectory's actions from its start pose."""
    pose = traj.start
    out = []
    for s in traj.steps:
        pose = s.pose_after if s.action is None else apply_action(scene, pose, s.action)
        out.append(pose)
    return out


# -- trace file --------------------------------------------------------------


def write_trace(fh, traj: Trajectory) -> None:
    header = {
        "type": "header",
        "id": traj.id,
        "scene_id": traj.scene_id,
        "start": traj.start.to_json(),
        "subtasks": [s.to_json() for s in traj.subtasks],
        "goal": traj.goal.to_json() if traj.goal else None,
    }
    fh.write(json.dumps(header) + "\n")
    for s in traj.steps:
        fh.write(json.dumps({"type": "step", **s.to_json()}) + "\n")
    fh.write(
        json.dumps({"type": "status", "status": traj.status.value, "error_subtask": traj.error_subtask, "error": traj.error})
        + "\n"
    )


class TraceError(ValueError):
    """Malformed trajectory trace."""


def read_trace(fh) -> Trajectory:
    try:
        records = [json.loads(line) for line in fh if line.strip()]
    except json.JSONDecodeError as exc:
        raise TraceError(f"invalid JSON in trace: {exc.msg}") from exc
    if len(records) < 2 or records[0].get("type") != "header" or records[-1].get("type") != "status":
        raise TraceError("trace must start with a header record and end with a status record")
    h = records[0]
    try:
        traj = Trajectory(
            id=h.get("id", ""),
            start=Pose.from_json(h["start"]),
            subtasks=tuple(SubTask.from_json(s) for s in h.get("subtasks", [])),
            steps=[StepRecord.from_json(r) for r in records[1:-1]],
            status=Status(records[-1]["status"]),
            error_subtask=records[-1].get("error_subtask"),
            error=records[-1].get("error"),
            scene_id=h.get("scene_id", ""),
            goal=Pose.from_json(h["goal"]) if h.get("goal") else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceError(f"malformed trace record: {exc}") from exc
    for a, b in zip(traj.steps, traj.steps[1:]):
        if a.pose_after != b.pose_before:
            raise TraceError("trace poses do not chain")
    return traj
