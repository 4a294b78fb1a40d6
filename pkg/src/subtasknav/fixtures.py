"""Procedural fixture scenes.

All fixtures use 0.25 m cells, outer walls one cell thick, and interior walls
two cells thick so that each room's bbox owns one of the two wall layers; a
door is a gap through both layers and therefore shows up as an entrance on
both adjacent rooms.
"""
from __future__ import annotations

import random

import numpy as np

from .scene import BBox, ObjectInstance, OccupancyGrid, Region, Scene, WorldPoint

RESOLUTION = 0.25
GENERATORS = ("corridor", "two-room", "four-room-ring", "exit-trap")
DEFAULT_SIZES = {"corridor": 6.0, "two-room": 5.0, "four-room-ring": 8.0, "exit-trap": 7.0}


class _Plan:
    def __init__(self, height: int, width: int):
        self.free = np.ones((height, width), dtype=bool)
        self.free[0, :] = self.free[-1, :] = False
        self.free[:, 0] = self.free[:, -1] = False
        self.regions: list[Region] = []
        self.objects: list[ObjectInstance] = []

    def wall(self, r0: int, r1: int, c0: int, c1: int) -> None:
        self.free[r0 : r1 + 1, c0 : c1 + 1] = False

    def door(self, r0: int, r1: int, c0: int, c1: int) -> None:
        self.free[r0 : r1 + 1, c0 : c1 + 1] = True

    def region(self, id: str, label: str, r0: int, r1: int, c0: int, c1: int) -> None:
        r = RESOLUTION
        self.regions.append(Region(id, label, BBox(c0 * r, r0 * r, (c1 + 1) * r, (r1 + 1) * r)))

    def obj(self, label: str, row: int, col: int) -> None:
        assert self.free[row, col], (label, row, col)
        r = RESOLUTION
        self.objects.append(ObjectInstance(label, WorldPoint((col + 0.5) * r, (row + 0.5) * r)))

    def scene(self, id: str) -> Scene:
        return Scene(id, OccupancyGrid(self.free, RESOLUTION), self.regions, self.objects)


def _cells(size: float, minimum: int) -> int:
    return max(minimum, int(round(size / RESOLUTION)))


def _jitter(rng: random.Random, plan: _Plan, row: int, col: int, spread: int = 1) -> tuple[int, int]:
    for _ in range(20):
        r = row + rng.randint(-spread, spread)
        c = col + rng.randint(-spread, spread)
        if 0 <= r < plan.free.shape[0] and 0 <= c < plan.free.shape[1] and plan.free[r, c]:
            return r, c
    return row, col


def corridor(size: float = 6.0, seed: int = 0) -> Scene:
    """A hallway with a one-door storage room at its east end.

    No region has two entrances, so GoThrough episodes cannot be sampled.
    """
    rng = random.Random(seed)
    w, h = _cells(size, 16), 9
    p = _Plan(h, w)
    split = w - 7
    p.wall(0, h - 1, split, split + 1)
    p.door(3, 5, split, split + 1)
    p.region("hallway", "hallway", 0, h - 1, 0, split)
    p.region("storage", "storage room", 0, h - 1, split + 1, w - 1)
    labels = ["umbrella stand", "bench", "painting", "plant", "coat rack"]
    spots = [(1, 2), (7, split // 3), (1, split // 2), (7, 2 * split // 3), (4, 2)]
    for label, (r, c) in zip(labels, spots):
        p.obj(label, *_jitter(rng, p, r, c))
    p.obj("shelf", *_jitter(rng, p, 6, w - 3))
    return p.scene(f"corridor-{seed}")


def two_room(size: float = 5.0, seed: int = 0) -> Scene:
    """Bedroom and living room side by side, joined by a single door."""
    rng = random.Random(seed)
    n = _cells(size, 14)
    p = _Plan(n, n)
    half = n // 2
    p.wall(0, n - 1, half - 1, half)
    mid = n // 2
    p.door(mid - 2, mid, half - 1, half)
    p.region("bedroom", "bedroom", 0, n - 1, 0, half - 1)
    p.region("living", "living room", 0, n - 1, half, n - 1)
    p.obj("bed", *_jitter(rng, p, n - 3, 2))
    p.obj("nightstand", *_jitter(rng, p, 2, half - 3))
    p.obj("sofa", *_jitter(rng, p, n - 3, n - 3))
    p.obj("tv", *_jitter(rng, p, 2, n - 3))
    p.obj("plant", *_jitter(rng, p, mid, half + 2))
    return p.scene(f"two-room-{seed}")


def four_room_ring(size: float = 8.0, seed: int = 0) -> Scene:
    """Four rooms in a 2x2 block, each door leading to the next room around the ring.

    Every room has exactly two entrances.
    """
    rng = random.Random(seed)
    n = _cells(size, 20)
    p = _Plan(n, n)
    h = n // 2
    p.wall(0, n - 1, h - 1, h)
    p.wall(h - 1, h, 0, n - 1)
    q = h // 2
    p.door(q - 1, q + 1, h - 1, h)  # south-west <-> south-east
    p.door(h - 1, h, h + q - 1, h + q + 1)  # south-east <-> north-east
    p.door(h + q - 1, h + q + 1, h - 1, h)  # north-east <-> north-west
    p.door(h - 1, h, q - 1, q + 1)  # north-west <-> south-west
    p.region("sw", "kitchen", 0, h - 1, 0, h - 1)
    p.region("se", "dining room", 0, h - 1, h, n - 1)
    p.region("ne", "office", h, n - 1, h, n - 1)
    p.region("nw", "bathroom", h, n - 1, 0, h - 1)
    p.obj("refrigerator", *_jitter(rng, p, 2, 2))
    p.obj("stove", *_jitter(rng, p, h - 4, 3))
    p.obj("dining table", *_jitter(rng, p, q, h + q))
    p.obj("desk", *_jitter(rng, p, n - 3, n - 3))
    p.obj("bookshelf", *_jitter(rng, p, h + 2, n - 3))
    p.obj("sink", *_jitter(rng, p, n - 3, 2))
    p.obj("towel rack", *_jitter(rng, p, h + 2, h - 4))
    return p.scene(f"four-room-ring-{seed}")


def exit_trap(size: float = 7.0, seed: int = 0) -> Scene:
    """A bedroom whose only door opens onto a hallway leading away from it.

    The hallway runs south from the door, so every point outside the bedroom
    lies on the far side of the doorway: heading for the bedroom landmark
    moves an agent geodesically away from any Exit goal.
    """
    rng = random.Random(seed)
    n = _cells(size, 20)
    p = _Plan(n, n)
    top = n // 2
    p.wall(top - 1, top, 0, n - 1)
    door_c = n // 4
    p.door(top - 1, top, door_c - 1, door_c + 1)
    p.region("bedroom", "bedroom", top, n - 1, 0, n - 1)
    p.region("hall", "hallway", 0, top - 1, 0, n - 1)
    p.obj("bed", *_jitter(rng, p, n - 3, n - 4))
    p.obj("wardrobe", *_jitter(rng, p, n - 3, 2))
    p.obj("lamp", *_jitter(rng, p, top + 2, n - 3))
    p.obj("shoe rack", *_jitter(rng, p, 2, 2))
    p.obj("stairs", *_jitter(rng, p, 2, n - 3))
    return p.scene(f"exit-trap-{seed}")


_BUILDERS = {
    "corridor": corridor,
    "two-room": two_room,
    "four-room-ring": four_room_ring,
    "exit-trap": exit_trap,
}


def generate_fixture(name: str, size: float | None = None, seed: int = 0) -> Scene:
    try:
        build = _BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown fixture {name!r}; expected one of {', '.join(GENERATORS)}") from None
    return build(DEFAULT_SIZES[name] if size is None else size, seed)


def fixture_suite(seed: int = 0) -> list[Scene]:
    return [generate_fixture(name, seed=seed) for name in GENERATORS]
