from __future__ import annotations

import json

import numpy as np
import pytest

from subtasknav import fixtures
from subtasknav.scene import load_scene


@pytest.fixture(scope="session")
def suite():
    return {s.id: s for s in fixtures.fixture_suite()}


@pytest.fixture(scope="session")
def two_room():
    return fixtures.generate_fixture("two-room")


@pytest.fixture(scope="session")
def corridor():
    return fixtures.generate_fixture("corridor")


@pytest.fixture(scope="session")
def exit_trap():
    return fixtures.generate_fixture("exit-trap")


def grid_rows(free: np.ndarray) -> list[str]:
    return ["".join("." if v else "#" for v in row) for row in free]


def make_scene(rows, regions=(), objects=(), id="t", resolution=0.25):
    """Scene from row strings ('.' free, '#' blocked); row 0 is the lowest y."""
    doc = {
        "id": id,
        "resolution": resolution,
        "grid": list(rows),
        "regions": [{"id": r[0], "label": r[1], "bbox": list(r[2])} for r in regions],
        "objects": [{"label": o[0], "position": list(o[1])} for o in objects],
    }
    return load_scene(json.dumps(doc))


def boxed_room(n: int, doors: list[tuple[int, int]]) -> list[str]:
    """n x n free grid with a room walled on rows/cols 2..n-3 and the given wall cells opened."""
    g = np.ones((n, n), dtype=bool)
    lo, hi = 2, n - 3
    g[lo, lo:hi + 1] = g[hi, lo:hi + 1] = False
    g[lo:hi + 1, lo] = g[lo:hi + 1, hi] = False
    for r, c in doors:
        g[r, c] = True
    return grid_rows(g)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
