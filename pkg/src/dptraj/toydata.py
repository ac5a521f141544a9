"""Small synthetic mobility corpora for demos and tests.

Trips run between a handful of hotspots with some heading noise, which
gives skewed cell popularity, shared routes and varied trip lengths.
"""

from __future__ import annotations

import numpy as np

from .geo import STOP, BoundingBox, GeoPoint, GridSpec, RawTrajectory, adjacent_anchors


def hotspot_trips(n: int, bbox: BoundingBox, seed: int = 0, n_hotspots: int = 5,
                  step: float = 0.04, max_points: int = 60) -> list[RawTrajectory]:
    """``n`` raw trajectories between random hotspots inside ``bbox``.

    ``step`` is the mean move length as a fraction of the box diagonal.
    """
    rng = np.random.default_rng(seed)
    lo = np.array([bbox.min_corner.lon, bbox.min_corner.lat])
    hi = np.array([bbox.max_corner.lon, bbox.max_corner.lat])
    span = hi - lo
    hotspots = lo + span * rng.uniform(0.1, 0.9, size=(n_hotspots, 2))
    weights = rng.dirichlet(np.ones(n_hotspots))
    spread = 0.05 * span
    diag = float(np.hypot(*span))

    out = []
    for i in range(n):
        a, b = rng.choice(n_hotspots, size=2, replace=False, p=weights)
        pos = hotspots[a] + rng.normal(0, spread)
        goal = hotspots[b] + rng.normal(0, spread)
        pts = [pos.copy()]
        while len(pts) < max_points:
            delta = goal - pos
            dist = float(np.hypot(*delta))
            if dist < step * diag:
                break
            heading = np.arctan2(delta[1], delta[0]) + rng.normal(0, 0.4)
            pos = pos + rng.exponential(step * diag) * np.array([np.cos(heading), np.sin(heading)])
            pos = np.clip(pos, lo, hi)
            pts.append(pos.copy())
        pts = np.clip(np.array(pts), lo, hi)
        out.append(RawTrajectory(f"t{i}", tuple(GeoPoint(float(x), float(y)) for x, y in pts)))
    return out


def random_walks(grid: GridSpec, n: int, max_len: int, rng: np.random.Generator) -> list[tuple[int, ...]]:
    """``n`` calibrated random walks with 1 to ``max_len`` anchors each."""
    out = []
    for _ in range(n):
        length = int(rng.integers(1, max_len + 1))
        seq = [int(rng.integers(grid.n_cells))]
        while len(seq) < length:
            nbrs = adjacent_anchors(seq[-1], grid)
            seq.append(nbrs[int(rng.integers(len(nbrs)))])
        out.append(tuple(seq) + (STOP,))
    return out
