"""Action-specific episode sampling.

Each action kind places its landmark at a characteristic spot along a
sampled path: the end (GoTo, GoInto), the middle (GoPast, GoThrough) or the
start (Exit). Goal poses stand in for goal images.
"""
from __future__ import annotations

import enum
import json
import math
import random
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scene import GridPoint, Region, Scene, SceneError, WorldPoint

TWO_PI = 2 * math.pi
NEAR_ENTRANCE = 1.5  # meters, geodesic
MIN_GOPAST_DISPLACEMENT = 1.5  # meters, euclidean
HEADING_JITTER = math.radians(45)
LATTICE_HEADINGS = tuple(k * math.pi / 6 for k in range(12))


class ActionKind(enum.Enum):
    GO_TO = "GoTo"
    GO_PAST = "GoPast"
    GO_INTO = "GoInto"
    GO_THROUGH = "GoThrough"
    EXIT = "Exit"

    @classmethod
    def parse(cls, text: str) -> ActionKind:
        key = text.replace("_", "").replace("-", "").replace(" ", "").lower()
        for kind in cls:
            if kind.value.lower() == key:
                return kind
        raise ValueError(f"unknown action kind {text!r}")

    @property
    def targets_region(self) -> bool:
        return self in REGION_KINDS


KIND_ORDER = tuple(ActionKind)
REGION_KINDS = frozenset({ActionKind.GO_INTO, ActionKind.GO_THROUGH, ActionKind.EXIT})


class ResourceUnavailable(SceneError):
    """The scene lacks what the requested action kind needs."""


class RetriesExhausted(SceneError):
    """Rejection sampling ran out of attempts."""


def normalize_heading(theta: float) -> float:
    theta = math.fmod(theta, TWO_PI)
    if theta < 0:
        theta += TWO_PI
    # fmod can hand back exactly 2*pi after the shift for tiny negatives
    return 0.0 if theta >= TWO_PI else theta


def angle_between(a: float, b: float) -> float:
    """Absolute wrapped difference of two headings, in [0, pi]."""
    d = abs(normalize_heading(a) - normalize_heading(b))
    return min(d, TWO_PI - d)


@dataclass(frozen=True)
class Pose:
    position: WorldPoint
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_heading(self.heading))

    def to_json(self) -> list[float]:
        return [self.position.x, self.position.y, self.heading]

    @classmethod
    def from_json(cls, v: Sequence[float]) -> Pose:
        return cls(WorldPoint(float(v[0]), float(v[1])), float(v[2]))


@dataclass(frozen=True)
class Episode:
    id: int
    scene_id: str
    action: ActionKind
    landmark: str
    start: Pose
    path: tuple[WorldPoint, ...]
    goal: Pose
    seed: int

    @property
    def path_end(self) -> WorldPoint:
        return self.path[-1]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "scene_id": self.scene_id,
            "action": self.action.value,
            "landmark": self.landmark,
            "start": self.start.to_json(),
            "path": [[p.x, p.y] for p in self.path],
            "goal": self.goal.to_json(),
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, d: dict) -> Episode:
        return cls(
            id=int(d["id"]),
            scene_id=d["scene_id"],
            action=ActionKind.parse(d["action"]),
            landmark=d["landmark"],
            start=Pose.from_json(d["start"]),
            path=tuple(WorldPoint(float(x), float(y)) for x, y in d["path"]),
            goal=Pose.from_json(d["goal"]),
            seed=int(d["seed"]),
        )


@dataclass(frozen=True)
class SamplerConfig:
    max_attempts: int = 1000
    near_entrance: float = NEAR_ENTRANCE
    min_gopast_displacement: float = MIN_GOPAST_DISPLACEMENT
    heading_jitter: float = HEADING_JITTER
    # how close the landmark must be to the goal image location
    goto_landmark_radius: float = 0.5
    gopast_landmark_radius: float = 0.5


# -- path geometry -----------------------------------------------------------


def path_length(path: Sequence[WorldPoint]) -> float:
    return sum(a.distance(b) for a, b in zip(path, path[1:]))


def arc_lengths(path: Sequence[WorldPoint]) -> list[float]:
    out = [0.0]
    for a, b in zip(path, path[1:]):
        out.append(out[-1] + a.distance(b))
    return out


def midpoint_index(path: Sequence[WorldPoint]) -> int:
    """Vertex whose arc length is closest to half the total (earlier vertex on ties)."""
    s = arc_lengths(path)
    half = s[-1] / 2
    return min(range(len(path)), key=lambda i: (abs(s[i] - half), i))


def path_tangent(path: Sequence[WorldPoint], i: int) -> float:
    """Heading of the path at vertex i, from its previous to its next vertex."""
    a = path[max(i - 1, 0)]
    b = path[min(i + 1, len(path) - 1)]
    if a == b:
        return 0.0
    return normalize_heading(math.atan2(b.y - a.y, b.x - a.x))


# -- per-scene candidate sets -------------------------------------------------


def _memo(scene: Scene) -> dict:
    memo = scene.__dict__.setdefault("_sampler_memo", {})
    return memo


def _free_cells(scene: Scene) -> list[GridPoint]:
    m = _memo(scene)
    if "free" not in m:
        m["free"] = scene.grid.free_cells()
    return m["free"]


def _free_arrays(scene: Scene) -> tuple[np.ndarray, np.ndarray]:
    """Flat grid indices and (n, 2) world centres of the free cells, in _free_cells order."""
    m = _memo(scene)
    if "free_arrays" not in m:
        g = scene.grid
        free = _free_cells(scene)
        m["free_arrays"] = (
            np.array([g.index(c) for c in free]),
            np.array([tuple(g.to_world(c)) for c in free]),
        )
    return m["free_arrays"]


def _inside(scene: Scene, region: Region, g: GridPoint) -> bool:
    return region.bbox.contains(scene.grid.to_world(g))


def _near_entrance_cells(scene: Scene, region: Region, entrance_idx: int, radius: float, inside: bool) -> list[GridPoint]:
    """Free cells on one side of the bbox within ``radius`` geodesic of an entrance midpoint."""
    key = ("near", region.id, entrance_idx, radius, inside)
    m = _memo(scene)
    if key not in m:
        mid = scene.grid.to_grid(region.entrances[entrance_idx].midpoint)
        f = scene.distance_field(mid) * scene.grid.resolution
        m[key] = [
            g for g in _free_cells(scene)
            if f[scene.grid.index(g)] < radius and _inside(scene, region, g) == inside
        ]
    return m[key]


def _region_cells(scene: Scene, region: Region) -> list[GridPoint]:
    key = ("cells", region.id)
    m = _memo(scene)
    if key not in m:
        m[key] = scene.region_cells(region)
    return m[key]


def _landmark_cells(scene: Scene, radius: float) -> list[GridPoint]:
    """Free cells within ``radius`` geodesic of at least one object."""
    key = ("landmark", radius)
    m = _memo(scene)
    if key not in m:
        near = (_object_distances(scene) <= radius + 1e-9).any(axis=0)
        m[key] = [g for g in _free_cells(scene) if near[scene.grid.index(g)]]
    return m[key]


def _object_distances(scene: Scene) -> np.ndarray:
    """(n_objects, n_cells) geodesic meters from each object's cell."""
    m = _memo(scene)
    if "objdist" not in m:
        res = scene.grid.resolution
        m["objdist"] = np.stack(
            [scene.distance_field(scene.grid.to_grid(o.position)) * res for o in scene.objects]
        )
    return m["objdist"]


def nearest_object(scene: Scene, p: WorldPoint):
    """(object, geodesic meters) of the object closest to p; declaration order breaks ties."""
    if not scene.objects:
        return None
    column = _object_distances(scene)[:, scene.grid.index(scene.grid.to_grid(p))]
    k = int(np.argmin(column))
    return scene.objects[k], float(column[k])


def entrance_distances(scene: Scene, region: Region, p: WorldPoint) -> list[float]:
    return [scene.geodesic_distance(p, e.midpoint) for e in region.entrances]


# -- sampling ----------------------------------------------------------------


def _cell_pose(scene: Scene, g: GridPoint, heading: float) -> Pose:
    return Pose(scene.grid.to_world(g), heading)


def _start_heading(rng: random.Random) -> float:
    return rng.choice(LATTICE_HEADINGS)


def _require_objects(scene: Scene, kind: ActionKind) -> None:
    if not scene.objects:
        raise ResourceUnavailable(f"{kind.value} needs at least one object in scene {scene.id!r}")


def _regions_with(scene: Scene, kind: ActionKind, entrances: int) -> list[Region]:
    regions = [r for r in scene.regions if len(r.entrances) >= entrances]
    if not regions:
        raise ResourceUnavailable(
            f"{kind.value} needs a region with at least {entrances} entrance(s) in scene {scene.id!r}"
        )
    return regions


def _goto(scene, rng, cfg):
    _require_objects(scene, ActionKind.GO_TO)
    ends = _landmark_cells(scene, cfg.goto_landmark_radius)
    free = _free_cells(scene)
    for _ in range(cfg.max_attempts):
        s, e = rng.choice(free), rng.choice(ends)
        if s == e or math.isinf(scene.geodesic_cells(s, e)):
            continue
        path = [scene.grid.to_world(g) for g in scene.shortest_cell_path(s, e)]
        obj, _ = nearest_object(scene, path[-1])
        if obj.position == path[-1]:
            heading = path_tangent(path, len(path) - 1)
        else:
            heading = math.atan2(obj.position.y - path[-1].y, obj.position.x - path[-1].x)
        return obj.label, _cell_pose(scene, s, _start_heading(rng)), path, Pose(path[-1], heading)
    raise RetriesExhausted(f"GoTo: no episode after {cfg.max_attempts} attempts")


def _gopast_pairs(scene: Scene, cfg: SamplerConfig) -> list[tuple[GridPoint, np.ndarray]]:
    """Each landmark-adjacent cell that can be a route midpoint, with the start cells that allow it.

    A start s qualifies for midpoint m when some end e more than the minimum
    displacement away has m on a shortest s-e route with the two halves
    within one cell of each other.
    """
    key = ("gopast", cfg.gopast_landmark_radius, cfg.min_gopast_displacement)
    memo = _memo(scene)
    if key in memo:
        return memo[key]
    grid = scene.grid
    free = _free_cells(scene)
    idx, pts = _free_arrays(scene)
    dist = scene.distance_rows(free)[:, idx]
    far = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1]) > cfg.min_gopast_displacement
    pos = {g: i for i, g in enumerate(free)}
    out = []
    for m in _landmark_cells(scene, cfg.gopast_landmark_radius):
        dm = dist[pos[m]]
        ok = np.isfinite(dm) & (dm > 0)
        through = np.abs(dist - (dm[:, None] + dm[None, :])) < 1e-6
        balanced = np.abs(dm[None, :] - dm[:, None]) <= 1.0 + 1e-6
        starts = np.nonzero(ok & (through & balanced & far & ok[None, :]).any(axis=1))[0]
        if starts.size:
            out.append((m, starts))
    memo[key] = out
    return out


def _gopast(scene, rng, cfg):
    """Propose a landmark-adjacent midpoint first, then a start, then an end mirrored through it.

    Every proposal is still checked against the definition: the arc-length
    midpoint of the actual shortest path must lie near the landmark.
    """
    _require_objects(scene, ActionKind.GO_PAST)
    grid = scene.grid
    free = _free_cells(scene)
    pairs = _gopast_pairs(scene, cfg)
    if not pairs:
        raise ResourceUnavailable(f"GoPast: no route in scene {scene.id!r} passes an object at its midpoint")
    free_idx, pts = _free_arrays(scene)
    xs, ys = pts[:, 0], pts[:, 1]
    for _ in range(cfg.max_attempts):
        m, starts = rng.choice(pairs)
        s = free[int(starts[rng.randrange(starts.size)])]
        fs = scene.distance_field(s)[free_idx]
        fm = scene.distance_field(m)[free_idx]
        half = scene.geodesic_cells(s, m)
        ws = grid.to_world(s)
        through_m = np.abs(fs - (half + fm)) < 1e-6
        balanced = np.abs(fm - half) <= 1.0 + 1e-6
        far = np.hypot(xs - ws.x, ys - ws.y) > cfg.min_gopast_displacement
        cand = np.nonzero(through_m & balanced & far)[0]
        e = free[int(cand[rng.randrange(cand.size)])]
        path = [grid.to_world(g) for g in scene.shortest_cell_path(s, e)]
        i = midpoint_index(path)
        obj, d = nearest_object(scene, path[i])
        if d > cfg.gopast_landmark_radius:
            continue
        heading = path_tangent(path, i) + rng.uniform(-cfg.heading_jitter, cfg.heading_jitter)
        return obj.label, _cell_pose(scene, s, _start_heading(rng)), path, Pose(path[i], heading)
    raise RetriesExhausted(f"GoPast: no episode after {cfg.max_attempts} attempts")


def _gointo_path(scene, rng, cfg, kind):
    """Outside-near-entrance cell and inside cell of a random region, plus the region."""
    regions = _regions_with(scene, kind, 1)
    for _ in range(cfg.max_attempts):
        region = rng.choice(regions)
        idx = rng.randrange(len(region.entrances))
        outside = _near_entrance_cells(scene, region, idx, cfg.near_entrance, inside=False)
        inside = _region_cells(scene, region)
        if not outside or not inside:
            continue
        o, i = rng.choice(outside), rng.choice(inside)
        if math.isinf(scene.geodesic_cells(o, i)):
            continue
        return region, o, i
    raise RetriesExhausted(f"{kind.value}: no episode after {cfg.max_attempts} attempts")


def _gointo(scene, rng, cfg):
    region, s, g = _gointo_path(scene, rng, cfg, ActionKind.GO_INTO)
    path = [scene.grid.to_world(c) for c in scene.shortest_cell_path(s, g)]
    goal = Pose(path[-1], rng.uniform(0.0, TWO_PI))
    return region.label, _cell_pose(scene, s, _start_heading(rng)), path, goal


def _exit(scene, rng, cfg):
    region, g, s = _gointo_path(scene, rng, cfg, ActionKind.EXIT)
    path = [scene.grid.to_world(c) for c in scene.shortest_cell_path(s, g)]
    goal = Pose(path[-1], rng.uniform(0.0, TWO_PI))
    return region.label, _cell_pose(scene, s, _start_heading(rng)), path, goal


def _gothrough(scene, rng, cfg):
    regions = _regions_with(scene, ActionKind.GO_THROUGH, 2)
    for _ in range(cfg.max_attempts):
        region = rng.choice(regions)
        a, b = rng.sample(range(len(region.entrances)), 2)
        near_a = _near_entrance_cells(scene, region, a, cfg.near_entrance, inside=False)
        near_b = _near_entrance_cells(scene, region, b, cfg.near_entrance, inside=False)
        if not near_a or not near_b:
            continue
        s, e = rng.choice(sorted(near_a)), rng.choice(sorted(near_b))
        if s == e or math.isinf(scene.geodesic_cells(s, e)):
            continue
        path = [scene.grid.to_world(c) for c in scene.shortest_cell_path(s, e)]
        i = midpoint_index(path)
        return region.label, _cell_pose(scene, s, _start_heading(rng)), path, Pose(path[i], path_tangent(path, i))
    raise RetriesExhausted(f"GoThrough: no episode after {cfg.max_attempts} attempts")


_SAMPLERS = {
    ActionKind.GO_TO: _goto,
    ActionKind.GO_PAST: _gopast,
    ActionKind.GO_INTO: _gointo,
    ActionKind.GO_THROUGH: _gothrough,
    ActionKind.EXIT: _exit,
}


def sample_episode(
    scene: Scene,
    kind: ActionKind,
    rng: int | random.Random,
    episode_id: int = 0,
    config: SamplerConfig = SamplerConfig(),
) -> Episode:
    """Sample one episode. An integer ``rng`` is used as the seed and recorded on the episode."""
    if isinstance(rng, random.Random):
        seed = -1
    else:
        seed = int(rng)
        rng = random.Random(seed)
    landmark, start, path, goal = _SAMPLERS[kind](scene, rng, config)
    return Episode(episode_id, scene.id, kind, landmark, start, tuple(path), goal, seed)


def episode_seed(seed: int, index: int) -> int:
    return (seed * 1_000_003 + index) % (2**31 - 1)


def generate_dataset(
    scene: Scene, kind: ActionKind, count: int, seed: int, config: SamplerConfig = SamplerConfig()
) -> list[Episode]:
    """``count`` episodes with sequential ids, reproducible from (scene, kind, seed)."""
    if count < 0:
        raise ValueError("count must be non-negative")
    return [sample_episode(scene, kind, episode_seed(seed, i), i, config) for i in range(count)]


def generate_suite_dataset(
    scenes: Sequence[Scene], kind: ActionKind, count: int, seed: int, config: SamplerConfig = SamplerConfig()
) -> list[Episode]:
    """``count`` episodes spread as evenly as possible over the scenes that can host ``kind``.

    Scenes lacking the resources for ``kind`` are skipped; ids are unique
    across the whole set. Raises ResourceUnavailable if no scene qualifies.
    """
    hosts, last_error = [], None
    for scene in scenes:
        try:
            sample_episode(scene, kind, episode_seed(seed, 0), 0, config)
        except ResourceUnavailable as exc:
            last_error = exc
            continue
        hosts.append(scene)
    if not hosts:
        raise last_error or ResourceUnavailable(f"no scene can host {kind.value}")
    out = []
    for k, scene in enumerate(hosts):
        share = count // len(hosts) + (k < count % len(hosts))
        base = len(out)
        out.extend(sample_episode(scene, kind, episode_seed(seed, base + i), base + i, config) for i in range(share))
    return out


# -- invariants --------------------------------------------------------------


def check_episode(scene: Scene, ep: Episode, config: SamplerConfig = SamplerConfig()) -> list[str]:
    """Violated invariants of an episode (empty when it is valid)."""
    problems = []
    grid = scene.grid
    if ep.path[0] != ep.start.position:
        problems.append("path does not start at the start position")
    for name, p in (("path start", ep.path[0]), ("path end", ep.path[-1]), ("goal", ep.goal.position)):
        if not grid.is_navigable(p):
            problems.append(f"{name} is not navigable")
    if not 0.0 <= ep.goal.heading < TWO_PI:
        problems.append("goal heading not normalized")

    if ep.action is ActionKind.GO_PAST:
        if ep.path[0].distance(ep.path[-1]) <= config.min_gopast_displacement:
            problems.append("GoPast endpoints closer than the minimum displacement")
        s = arc_lengths(ep.path)
        total = s[-1]
        try:
            i = ep.path.index(ep.goal.position)
        except ValueError:
            problems.append("GoPast goal is not a path vertex")
        else:
            if abs(s[i] / total - 0.5) > grid.resolution / total + 1e-12:
                problems.append("GoPast goal is not at the path midpoint")
            if angle_between(ep.goal.heading, path_tangent(ep.path, i)) > config.heading_jitter + 1e-9:
                problems.append("GoPast goal heading deviates from the tangent by more than the jitter")
        return problems

    if ep.action is ActionKind.GO_TO:
        if ep.goal.position != ep.path[-1]:
            problems.append("GoTo goal is not the path end")
        return problems

    regions = scene.regions_labeled(ep.landmark)
    if not regions:
        return problems + [f"no region labeled {ep.landmark!r}"]
    if ep.action is ActionKind.GO_INTO:
        ok = any(
            not r.bbox.contains(ep.start.position)
            and r.bbox.contains(ep.goal.position)
            and min(entrance_distances(scene, r, ep.start.position), default=math.inf) <= config.near_entrance
            for r in regions
        )
        if not ok:
            problems.append("GoInto start/goal containment or entrance proximity violated")
    elif ep.action is ActionKind.EXIT:
        ok = any(
            r.bbox.contains(ep.start.position)
            and not r.bbox.contains(ep.goal.position)
            and min(entrance_distances(scene, r, ep.goal.position), default=math.inf) <= config.near_entrance
            for r in regions
        )
        if not ok:
            problems.append("Exit start/goal containment or entrance proximity violated")
    elif ep.action is ActionKind.GO_THROUGH:
        ok = False
        for r in regions:
            ds = entrance_distances(scene, r, ep.path[0])
            de = entrance_distances(scene, r, ep.path[-1])
            near_s = {i for i, d in enumerate(ds) if d <= config.near_entrance}
            near_e = {j for j, d in enumerate(de) if d <= config.near_entrance}
            outside = not (r.bbox.contains(ep.path[0]) or r.bbox.contains(ep.path[-1]))
            if outside and any(i != j for i in near_s for j in near_e):
                ok = True
        if not ok:
            problems.append("GoThrough endpoints are not outside the region near two distinct entrances")
        i = midpoint_index(ep.path)
        if ep.goal.position != ep.path[i]:
            problems.append("GoThrough goal is not at the path midpoint")
    return problems


# -- dataset file ------------------------------------------------------------


def write_dataset(fh, episodes: Sequence[Episode], scene_id: str, kind: ActionKind, seed: int) -> None:
    header = {"scene_id": scene_id, "kind": kind.value, "seed": seed, "count": len(episodes)}
    fh.write(json.dumps(header) + "\n")
    for ep in episodes:
        fh.write(json.dumps(ep.to_json()) + "\n")


def read_dataset(fh) -> tuple[dict, list[Episode]]:
    lines = [line for line in fh if line.strip()]
    if not lines:
        raise ValueError("dataset file is empty (missing header line)")
    header = json.loads(lines[0])
    episodes = [Episode.from_json(json.loads(line)) for line in lines[1:]]
    if header.get("count") != len(episodes):
        raise ValueError(f"dataset header declares {header.get('count')} episodes, found {len(episodes)}")
    return header, episodes
