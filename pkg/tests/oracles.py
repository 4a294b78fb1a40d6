"""Independent reference implementations the library is checked against.

Nothing here imports from subtasknav: the oracles rebuild each quantity
from first principles so an error in the library cannot be mirrored.
"""
from __future__ import annotations

import math

import numpy as np

SQRT2 = math.sqrt(2.0)
STEPS = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if dr or dc]


def _moves(free: np.ndarray):
    """(drow, dcol, valid-mask) per 8-neighbour move, corner cutting forbidden."""
    h, w = free.shape
    out = []
    for dr, dc in STEPS:
        ok = np.zeros_like(free)
        for r in range(h):
            for c in range(w):
                r2, c2 = r + dr, c + dc
                if not (0 <= r2 < h and 0 <= c2 < w):
                    continue
                if not (free[r, c] and free[r2, c2]):
                    continue
                if dr and dc and not (free[r + dr, c] and free[r, c + dc]):
                    continue
                ok[r, c] = True
        out.append((dr, dc, ok))
    return out


def bellman_ford(free: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All-pairs shortest paths by repeated edge relaxation.

    Returns integer arrays (axis, diag) of shape (cells, cells): the number
    of straight and diagonal moves on a shortest route, -1 when
    unreachable. Lengths compare as axis + diag*sqrt(2); carrying the
    integer counts lets the caller rebuild meters without rounding drift.
    """
    free = np.asarray(free, dtype=bool)
    h, w = free.shape
    n = h * w
    axis = np.full((n, n), -1, dtype=np.int64)
    diag = np.full((n, n), -1, dtype=np.int64)
    value = np.full((n, n), np.inf)
    for k in np.flatnonzero(free.ravel()):
        axis[k, k] = diag[k, k] = 0
        value[k, k] = 0.0
    edges = []
    for dr, dc, ok in _moves(free):
        src = np.flatnonzero(ok.ravel())
        edges.append((src, src + dr * w + dc, 0 if dr and dc else 1, 1 if dr and dc else 0))
    changed = True
    while changed:
        changed = False
        for src, dst, da, dd in edges:
            cand = value[:, src] + (SQRT2 if dd else 1.0)
            better = cand < value[:, dst] - 1e-9
            if better.any():
                rows, cols = np.nonzero(better)
                value[rows, dst[cols]] = cand[rows, cols]
                axis[rows, dst[cols]] = axis[rows, src[cols]] + da
                diag[rows, dst[cols]] = diag[rows, src[cols]] + dd
                changed = True
    return axis, diag


def meters(axis: int, diag: int, resolution: float) -> float:
    if axis < 0:
        return math.inf
    return axis * resolution + diag * (resolution * SQRT2)


def reference_reward(prev_dtg, prev_atg, dtg, atg, stopped, radius=1.0, angle=math.radians(25)):
    """Shaped step reward written out term by term."""
    total = -0.01
    if stopped and dtg <= radius:
        total += 5.0
    if dtg <= radius and atg <= angle:
        total += 5.0
    total += prev_dtg - dtg
    if dtg <= radius:
        total += prev_atg - atg
    return total
