"""Synthetic 2D scenes: occupancy grid, labeled regions, objects, geodesics.

Rows of the grid index the y axis (row 0 sits at ``origin.y``) and columns
index the x axis. Cells are either free or blocked; every query that falls
outside the grid treats the location as blocked.

Geodesic distances use 8-connectivity. Axis steps cost one cell width and
diagonal steps cost ``sqrt(2)`` widths; a diagonal step is only allowed when
both orthogonal neighbours are free, so a path never squeezes through the
corner shared by two blocked cells.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

SQRT2 = math.sqrt(2.0)

# (drow, dcol) in a fixed order; shortest_path tie-breaking falls back on it.
NEIGHBOURS = ((0, 1), (1, 0), (0, -1), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1))


class SceneError(Exception):
    """Base class for scene errors."""


class SchemaError(SceneError):
    """The scene document is malformed."""


class InvariantError(SceneError):
    """The scene document is well formed but violates a scene invariant."""


class OutOfBounds(SceneError):
    """A query point lies outside the grid."""


class Unreachable(SceneError):
    """No free path connects two points."""


@dataclass(frozen=True)
class WorldPoint:
    x: float
    y: float

    def __iter__(self):
        yield self.x
        yield self.y

    def distance(self, other: WorldPoint) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True, order=True)
class GridPoint:
    row: int
    col: int


@dataclass(frozen=True)
class BBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, p: WorldPoint) -> bool:
        return self.xmin <= p.x <= self.xmax and self.ymin <= p.y <= self.ymax

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    @property
    def center(self) -> WorldPoint:
        return WorldPoint((self.xmin + self.xmax) / 2, (self.ymin + self.ymax) / 2)


class OccupancyGrid:
    """Boolean occupancy map; ``free[row, col]`` is True for traversable cells."""

    def __init__(self, free: np.ndarray, resolution: float = 0.25, origin: WorldPoint = WorldPoint(0.0, 0.0)):
        free = np.asarray(free, dtype=bool)
        if free.ndim != 2 or free.size == 0:
            raise InvariantError("grid: expected a non-empty 2D array")
        if not resolution > 0:
            raise InvariantError("resolution: must be > 0")
        self.free = free
        self.free.setflags(write=False)
        self.resolution = float(resolution)
        self.origin = origin

    @property
    def height(self) -> int:
        return self.free.shape[0]

    @property
    def width(self) -> int:
        return self.free.shape[1]

    def in_bounds(self, g: GridPoint) -> bool:
        return 0 <= g.row < self.height and 0 <= g.col < self.width

    def is_free(self, g: GridPoint) -> bool:
        return self.in_bounds(g) and bool(self.free[g.row, g.col])

    def to_grid(self, p: WorldPoint) -> GridPoint:
        col = math.floor((p.x - self.origin.x) / self.resolution + 1e-9)
        row = math.floor((p.y - self.origin.y) / self.resolution + 1e-9)
        return GridPoint(row, col)

    def to_world(self, g: GridPoint) -> WorldPoint:
        r = self.resolution
        return WorldPoint(self.origin.x + (g.col + 0.5) * r, self.origin.y + (g.row + 0.5) * r)

    def contains_point(self, p: WorldPoint) -> bool:
        return self.in_bounds(self.to_grid(p))

    def is_navigable(self, p: WorldPoint) -> bool:
        return self.is_free(self.to_grid(p))

    def index(self, g: GridPoint) -> int:
        return g.row * self.width + g.col

    def cell(self, index: int) -> GridPoint:
        return GridPoint(*divmod(int(index), self.width))

    def free_cells(self) -> list[GridPoint]:
        rows, cols = np.nonzero(self.free)
        return [GridPoint(int(r), int(c)) for r, c in zip(rows, cols)]

    def cell_range(self, bbox: BBox) -> tuple[int, int, int, int]:
        """Inclusive (row0, row1, col0, col1) of the cells a bbox covers, clipped to the grid."""
        r = self.resolution
        c0 = math.floor((bbox.xmin - self.origin.x) / r + 1e-9)
        c1 = math.ceil((bbox.xmax - self.origin.x) / r - 1e-9) - 1
        r0 = math.floor((bbox.ymin - self.origin.y) / r + 1e-9)
        r1 = math.ceil((bbox.ymax - self.origin.y) / r - 1e-9) - 1
        return max(r0, 0), min(r1, self.height - 1), max(c0, 0), min(c1, self.width - 1)

    def step_allowed(self, g: GridPoint, drow: int, dcol: int) -> bool:
        n = GridPoint(g.row + drow, g.col + dcol)
        if not (self.is_free(g) and self.is_free(n)):
            return False
        if drow and dcol:
            return self.is_free(GridPoint(g.row + drow, g.col)) and self.is_free(GridPoint(g.row, g.col + dcol))
        return True

    def neighbours(self, g: GridPoint) -> Iterable[tuple[GridPoint, float]]:
        """Yield reachable neighbours with step cost in cell units."""
        for drow, dcol in NEIGHBOURS:
            if self.step_allowed(g, drow, dcol):
                yield GridPoint(g.row + drow, g.col + dcol), (SQRT2 if drow and dcol else 1.0)


@dataclass(frozen=True)
class Entrance:
    region_id: str
    cells: tuple[GridPoint, ...]
    midpoint: WorldPoint


@dataclass(frozen=True)
class Region:
    id: str
    label: str
    bbox: BBox
    entrances: tuple[Entrance, ...] = ()


@dataclass(frozen=True)
class ObjectInstance:
    label: str
    position: WorldPoint


def detect_entrances(grid: OccupancyGrid, region: Region) -> list[Entrance]:
    """Free runs where the region's bbox outline meets the occupancy map.

    Each maximal 8-connected group of free boundary cells is one entrance.
    Entrances are ordered by the (row, col) of their first cell.
    """
    r0, r1, c0, c1 = grid.cell_range(region.bbox)
    if r0 > r1 or c0 > c1:
        return []
    boundary = set()
    for col in range(c0, c1 + 1):
        boundary.add(GridPoint(r0, col))
        boundary.add(GridPoint(r1, col))
    for row in range(r0, r1 + 1):
        boundary.add(GridPoint(row, c0))
        boundary.add(GridPoint(row, c1))
    free = {g for g in boundary if grid.is_free(g)}

    entrances = []
    seen: set[GridPoint] = set()
    for start in sorted(free):
        if start in seen:
            continue
        component = []
        stack = [start]
        seen.add(start)
        while stack:
            g = stack.pop()
            component.append(g)
            for drow in (-1, 0, 1):
                for dcol in (-1, 0, 1):
                    n = GridPoint(g.row + drow, g.col + dcol)
                    if n in free and n not in seen:
                        seen.add(n)
                        stack.append(n)
        component.sort()
        centers = [grid.to_world(g) for g in component]
        mid = WorldPoint(sum(p.x for p in centers) / len(centers), sum(p.y for p in centers) / len(centers))
        entrances.append(Entrance(region.id, tuple(component), mid))
    return entrances


def _canonical_length(cells: float) -> tuple[int, int]:
    """Split a cell-unit path length into (axis steps, diagonal steps).

    The split is unique because sqrt(2) is irrational; rebuilding the length
    from the integer counts makes every route to the same optimum produce the
    same float.
    """
    for diag in range(int(cells / SQRT2 + 1e-6) + 1):
        axis = cells - diag * SQRT2
        if abs(axis - round(axis)) < 1e-6:
            return int(round(axis)), diag
    raise ValueError(f"{cells!r} is not a sum of axis and diagonal steps")


def steps_to_meters(axis: int, diag: int, resolution: float) -> float:
    return axis * resolution + diag * (resolution * SQRT2)


class Scene:
    """Immutable world model. Distance fields are computed lazily and cached."""

    def __init__(
        self,
        id: str,
        grid: OccupancyGrid,
        regions: Sequence[Region] = (),
        objects: Sequence[ObjectInstance] = (),
    ):
        self.id = id
        self.grid = grid
        ids = [r.id for r in regions]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise InvariantError(f"regions.id: duplicate region id {dup!r}")
        for r in regions:
            if not r.bbox.area > 0 or r.bbox.xmax <= r.bbox.xmin or r.bbox.ymax <= r.bbox.ymin:
                raise InvariantError(f"regions[{r.id}].bbox: must have strictly positive area")
            r0, r1, c0, c1 = grid.cell_range(r.bbox)
            if r0 > r1 or c0 > c1:
                raise InvariantError(f"regions[{r.id}].bbox: does not intersect the grid")
        for o in objects:
            if not o.label.strip():
                raise InvariantError("objects.label: must be non-empty")
            if not grid.is_navigable(o.position):
                raise InvariantError(f"objects[{o.label}].position: object lies on a blocked or out-of-bounds cell")
        if not grid.free.any():
            raise InvariantError("grid: at least one free cell is required")
        self.regions = tuple(
            Region(r.id, r.label, r.bbox, tuple(detect_entrances(grid, r))) for r in regions
        )
        self.objects = tuple(objects)
        self._fields: dict[int, np.ndarray] = {}
        self._graph = self._build_graph()
        self._adjacency = self._build_adjacency()

    def _build_graph(self) -> csr_matrix:
        free = self.grid.free
        h, w = free.shape
        idx = np.arange(h * w).reshape(h, w)
        src, dst, cost = [], [], []
        for drow, dcol in NEIGHBOURS:
            rs = slice(max(0, -drow), h - max(0, drow))
            cs = slice(max(0, -dcol), w - max(0, dcol))
            rd = slice(max(0, drow), h - max(0, -drow))
            cd = slice(max(0, dcol), w - max(0, -dcol))
            ok = free[rs, cs] & free[rd, cd]
            if drow and dcol:
                rm = slice(max(0, drow), h - max(0, -drow))
                ok &= free[rm, cs] & free[rs, cd]
            src.append(idx[rs, cs][ok])
            dst.append(idx[rd, cd][ok])
            cost.append(np.full(int(ok.sum()), SQRT2 if drow and dcol else 1.0))
        return csr_matrix(
            (np.concatenate(cost), (np.concatenate(src), np.concatenate(dst))), shape=(h * w, h * w)
        )

    def _build_adjacency(self) -> list[tuple[tuple[int, float], ...]]:
        """Per cell index: (neighbour index, cell-unit cost) in NEIGHBOURS order."""
        g = self.grid
        adj: list[tuple[tuple[int, float], ...]] = [()] * (g.width * g.height)
        for cell in g.free_cells():
            adj[g.index(cell)] = tuple((g.index(n), cost) for n, cost in g.neighbours(cell))
        return adj

    # -- lookups -------------------------------------------------------
    def region(self, region_id: str) -> Region:
        for r in self.regions:
            if r.id == region_id:
                return r
        raise KeyError(region_id)

    def regions_labeled(self, label: str) -> list[Region]:
        key = label.strip().lower()
        return [r for r in self.regions if r.label.lower() == key]

    def objects_labeled(self, label: str) -> list[ObjectInstance]:
        key = label.strip().lower()
        return [o for o in self.objects if o.label.lower() == key]

    def region_cells(self, region: Region) -> list[GridPoint]:
        """Free cells covered by the region's bbox, row-major."""
        r0, r1, c0, c1 = self.grid.cell_range(region.bbox)
        return [
            GridPoint(r, c) for r in range(r0, r1 + 1) for c in range(c0, c1 + 1) if self.grid.free[r, c]
        ]

    # -- distance fields -----------------------------------------------
    def distance_field(self, source: GridPoint) -> np.ndarray:
        """Cell-unit geodesic distance from ``source`` to every cell (inf if unreachable)."""
        key = self.grid.index(source)
        f = self._fields.get(key)
        if f is None:
            f = dijkstra(self._graph, directed=False, indices=key)
            f.setflags(write=False)
            self._fields[key] = f
        return f

    def distance_rows(self, sources: Sequence[GridPoint]) -> np.ndarray:
        """Stacked distance fields for several sources, one Dijkstra call for the cache misses."""
        keys = [self.grid.index(g) for g in sources]
        missing = sorted({k for k in keys if k not in self._fields})
        if missing:
            rows = np.atleast_2d(dijkstra(self._graph, directed=False, indices=missing))
            for k, row in zip(missing, rows):
                row.setflags(write=False)
                self._fields[k] = row
        return np.stack([self._fields[k] for k in keys]) if keys else np.empty((0, self.grid.width * self.grid.height))

    def _check(self, p: WorldPoint) -> GridPoint:
        g = self.grid.to_grid(p)
        if not self.grid.in_bounds(g):
            raise OutOfBounds(f"point ({p.x:.3f}, {p.y:.3f}) is outside the grid")
        return g

    def geodesic_cells(self, a: GridPoint, b: GridPoint) -> float:
        if not (self.grid.is_free(a) and self.grid.is_free(b)):
            return math.inf
        return float(self.distance_field(a)[self.grid.index(b)])

    def geodesic_distance(self, a: WorldPoint, b: WorldPoint) -> float:
        """Shortest free-path length in meters between the cells of a and b; inf if unreachable."""
        ga, gb = self._check(a), self._check(b)
        d = self.geodesic_cells(ga, gb)
        if math.isinf(d):
            return math.inf
        return steps_to_meters(*_canonical_length(d), self.grid.resolution)

    def shortest_path(self, a: WorldPoint, b: WorldPoint) -> list[WorldPoint]:
        return [self.grid.to_world(g) for g in self.shortest_cell_path(self._check(a), self._check(b))]

    def shortest_cell_path(self, ga: GridPoint, gb: GridPoint) -> list[GridPoint]:
        """Cell path from ga to gb.

        Backtracks from gb through the distance field of ga. Among equally
        short predecessors the one closest to the straight segment a-b wins,
        then the fixed neighbour order, so paths hug the chord.
        """
        if math.isinf(self.geodesic_cells(ga, gb)):
            raise Unreachable(f"no free path between cells {ga} and {gb}")
        field_a = self.distance_field(ga)
        w = self.grid.width
        ax, ay = ga.col, ga.row
        vx, vy = gb.col - ga.col, gb.row - ga.row
        norm2 = vx * vx + vy * vy

        def chord_offset(i: int) -> float:
            row, col = divmod(i, w)
            if norm2 == 0:
                return 0.0
            t = min(1.0, max(0.0, ((col - ax) * vx + (row - ay) * vy) / norm2))
            return math.hypot(col - ax - t * vx, row - ay - t * vy)

        target = self.grid.index(ga)
        cur = self.grid.index(gb)
        indices = [cur]
        while cur != target:
            dcur = field_a[cur]
            best_key, best = math.inf, -1
            for n, cost in self._adjacency[cur]:
                if abs(field_a[n] + cost - dcur) < 1e-9:
                    key = chord_offset(n)
                    if key < best_key - 1e-12:
                        best_key, best = key, n
            cur = best
            indices.append(cur)
        path = [GridPoint(*divmod(i, w)) for i in indices]
        path.reverse()
        return path

    def region_containing(self, p: WorldPoint) -> str | None:
        for r in self.regions:
            if r.bbox.contains(p):
                return r.id
        return None

    # -- serialization -------------------------------------------------
    def to_document(self) -> dict:
        rows = ["".join("." if f else "#" for f in row) for row in self.grid.free]
        return {
            "id": self.id,
            "resolution": self.grid.resolution,
            "origin": [self.grid.origin.x, self.grid.origin.y],
            "grid": rows,
            "regions": [
                {"id": r.id, "label": r.label, "bbox": [r.bbox.xmin, r.bbox.ymin, r.bbox.xmax, r.bbox.ymax]}
                for r in self.regions
            ],
            "objects": [{"label": o.label, "position": [o.position.x, o.position.y]} for o in self.objects],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_document(), indent=1)


def _number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SchemaError(f"{name}: expected a finite number, got {value!r}")
    return float(value)


def _pair(value, name: str) -> tuple[float, float]:
    if not isinstance(value, list) or len(value) != 2:
        raise SchemaError(f"{name}: expected [x, y]")
    return _number(value[0], f"{name}[0]"), _number(value[1], f"{name}[1]")


def scene_from_document(doc: dict) -> Scene:
    if not isinstance(doc, dict):
        raise SchemaError("document: expected a JSON object")
    for key in ("id", "grid"):
        if key not in doc:
            raise SchemaError(f"{key}: missing required key")
    if not isinstance(doc["id"], str) or not doc["id"]:
        raise SchemaError("id: expected a non-empty string")
    resolution = _number(doc.get("resolution", 0.25), "resolution")
    origin = WorldPoint(*_pair(doc.get("origin", [0.0, 0.0]), "origin"))

    rows = doc["grid"]
    if not isinstance(rows, list) or not rows or not all(isinstance(r, str) for r in rows):
        raise SchemaError("grid: expected a non-empty array of strings")
    if len({len(r) for r in rows}) != 1 or not rows[0]:
        raise SchemaError("grid: rows must be non-empty and equally long")
    bad = set("".join(rows)) - {".", "#"}
    if bad:
        raise SchemaError(f"grid: unexpected characters {sorted(bad)!r}")
    free = np.array([[ch == "." for ch in r] for r in rows], dtype=bool)
    grid = OccupancyGrid(free, resolution, origin)

    regions = []
    raw_regions = doc.get("regions", [])
    if not isinstance(raw_regions, list):
        raise SchemaError("regions: expected an array")
    for i, r in enumerate(raw_regions):
        if not isinstance(r, dict) or not {"id", "label", "bbox"} <= r.keys():
            raise SchemaError(f"regions[{i}]: expected keys id, label, bbox")
        if not isinstance(r["id"], str) or not isinstance(r["label"], str):
            raise SchemaError(f"regions[{i}]: id and label must be strings")
        box = r["bbox"]
        if not isinstance(box, list) or len(box) != 4:
            raise SchemaError(f"regions[{i}].bbox: expected [xmin, ymin, xmax, ymax]")
        regions.append(Region(r["id"], r["label"], BBox(*(_number(v, f"regions[{i}].bbox") for v in box))))

    objects = []
    raw_objects = doc.get("objects", [])
    if not isinstance(raw_objects, list):
        raise SchemaError("objects: expected an array")
    for i, o in enumerate(raw_objects):
        if not isinstance(o, dict) or not {"label", "position"} <= o.keys():
            raise SchemaError(f"objects[{i}]: expected keys label, position")
        if not isinstance(o["label"], str):
            raise SchemaError(f"objects[{i}].label: expected a string")
        objects.append(ObjectInstance(o["label"], WorldPoint(*_pair(o["position"], f"objects[{i}].position"))))

    return Scene(doc["id"], grid, regions, objects)


def load_scene(document: str) -> Scene:
    """Parse and validate a JSON scene document. Entrances are recomputed."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"document: invalid JSON ({exc.msg})") from exc
    return scene_from_document(doc)


def read_scene(path) -> Scene:
    with open(path, encoding="utf-8") as fh:
        return load_scene(fh.read())
