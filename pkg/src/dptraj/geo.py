"""Uniform-grid reference system and trajectory calibration.

Locations are discretized onto a ``u_h x u_w`` grid laid over a bounding
box. Cells are indexed row-major with row 0 at the minimum latitude, so
anchor ``a`` sits at ``(a // u_w, a % u_w)``. The stop marker is the
integer :data:`STOP`, which never collides with an anchor index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

STOP = -1

# Moore-neighbourhood offsets in row-major order, so that neighbour anchors
# come out sorted by index.
NEIGHBOR_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)
# Slot 8 of a frequency-matrix row holds the stop marker.
STOP_SLOT = len(NEIGHBOR_OFFSETS)
N_SLOTS = STOP_SLOT + 1


class OutsideDomainError(ValueError):
    """A location point falls outside the grid's bounding box."""


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise ValueError(f"non-finite coordinate: {self.lon}, {self.lat}")
        if not (-180.0 <= self.lon <= 180.0 and -90.0 <= self.lat <= 90.0):
            raise ValueError(f"coordinate out of range: {self.lon}, {self.lat}")


@dataclass(frozen=True)
class BoundingBox:
    min_corner: GeoPoint
    max_corner: GeoPoint

    def __post_init__(self):
        if not (self.min_corner.lon < self.max_corner.lon
                and self.min_corner.lat < self.max_corner.lat):
            raise ValueError("bounding box min corner must be strictly below max corner")

    @classmethod
    def from_bounds(cls, min_lon: float, min_lat: float, max_lon: float, max_lat: float):
        return cls(GeoPoint(min_lon, min_lat), GeoPoint(max_lon, max_lat))

    def contains(self, p: GeoPoint) -> bool:
        return (self.min_corner.lon <= p.lon <= self.max_corner.lon
                and self.min_corner.lat <= p.lat <= self.max_corner.lat)


@dataclass(frozen=True)
class GridSpec:
    u_h: int
    u_w: int
    bbox: BoundingBox

    def __post_init__(self):
        if self.u_h < 2 or self.u_w < 2:
            raise ValueError(f"grid must be at least 2x2, got {self.u_h}x{self.u_w}")
        if not (self.cell_width > 0 and self.cell_height > 0):
            raise ValueError("grid cells must have positive extent")

    @property
    def n_cells(self) -> int:
        return self.u_h * self.u_w

    @property
    def cell_width(self) -> float:
        return (self.bbox.max_corner.lon - self.bbox.min_corner.lon) / self.u_w

    @property
    def cell_height(self) -> float:
        return (self.bbox.max_corner.lat - self.bbox.min_corner.lat) / self.u_h

    def rowcol(self, a: int) -> tuple[int, int]:
        self._check_anchor(a)
        return divmod(a, self.u_w)

    def anchor(self, row: int, col: int) -> int:
        if not (0 <= row < self.u_h and 0 <= col < self.u_w):
            raise ValueError(f"cell ({row}, {col}) not on a {self.u_h}x{self.u_w} grid")
        return row * self.u_w + col

    def _check_anchor(self, a: int) -> None:
        if not (0 <= a < self.n_cells):
            raise ValueError(f"anchor {a} not on a {self.u_h}x{self.u_w} grid")


@dataclass(frozen=True)
class RawTrajectory:
    id: str
    points: tuple[GeoPoint, ...]

    def __post_init__(self):
        if not self.points:
            raise ValueError(f"trajectory {self.id!r} has no points")


def _axis_index(value: float, lo: float, step: float, n: int) -> int:
    idx = min(max(int(math.floor((value - lo) / step)), 0), n - 1)
    # Settle ties against the edges as computed, lo + i * step, so that
    # cell extents are exactly half-open; the max edge stays closed.
    if idx < n - 1 and value >= lo + (idx + 1) * step:
        idx += 1
    elif idx > 0 and value < lo + idx * step:
        idx -= 1
    return idx


def map_point(p: GeoPoint, grid: GridSpec) -> int:
    """Return the anchor of the cell containing ``p``.

    Raises:
        OutsideDomainError: if ``p`` is not inside ``grid.bbox``.
    """
    if not grid.bbox.contains(p):
        raise OutsideDomainError(f"point ({p.lon}, {p.lat}) outside grid domain")
    lo = grid.bbox.min_corner
    row = _axis_index(p.lat, lo.lat, grid.cell_height, grid.u_h)
    col = _axis_index(p.lon, lo.lon, grid.cell_width, grid.u_w)
    return row * grid.u_w + col


def anchor_centroid(a: int, grid: GridSpec) -> GeoPoint:
    row, col = grid.rowcol(a)
    lo = grid.bbox.min_corner
    return GeoPoint(lo.lon + (col + 0.5) * grid.cell_width,
                    lo.lat + (row + 0.5) * grid.cell_height)


def adjacent_anchors(a: int, grid: GridSpec) -> list[int]:
    """The 8-adjacent anchors of ``a`` that exist on the grid, sorted."""
    row, col = grid.rowcol(a)
    out = []
    for dr, dc in NEIGHBOR_OFFSETS:
        r, c = row + dr, col + dc
        if 0 <= r < grid.u_h and 0 <= c < grid.u_w:
            out.append(r * grid.u_w + c)
    return out


def neighbors(a: int, grid: GridSpec) -> frozenset[int]:
    """Symbols reachable from ``a`` in one step: adjacent anchors plus STOP."""
    return frozenset(adjacent_anchors(a, grid)) | {STOP}


def is_adjacent(a: int, b: int, grid: GridSpec) -> bool:
    (r1, c1), (r2, c2) = grid.rowcol(a), grid.rowcol(b)
    return max(abs(r1 - r2), abs(c1 - c2)) == 1


def neighbor_slot(a: int, b: int, grid: GridSpec) -> int:
    """Position of symbol ``b`` within the 9-slot row of anchor ``a``."""
    if b == STOP:
        return STOP_SLOT
    (r1, c1), (r2, c2) = grid.rowcol(a), grid.rowcol(b)
    try:
        return NEIGHBOR_OFFSETS.index((r2 - r1, c2 - c1))
    except ValueError:
        raise ValueError(f"anchors {a} and {b} are not adjacent") from None


def slot_symbol(a: int, slot: int, grid: GridSpec) -> int | None:
    """Inverse of :func:`neighbor_slot`; None when the slot is off-grid."""
    if slot == STOP_SLOT:
        return STOP
    row, col = grid.rowcol(a)
    dr, dc = NEIGHBOR_OFFSETS[slot]
    r, c = row + dr, col + dc
    if 0 <= r < grid.u_h and 0 <= c < grid.u_w:
        return r * grid.u_w + c
    return None


def cell_line(a: int, b: int, grid: GridSpec) -> list[int]:
    """Cells on the 8-connected digital line from ``a`` to ``b``, inclusive.

    Consecutive cells are always at Chebyshev distance 1 and the walk takes
    exactly ``max(|drow|, |dcol|)`` steps.
    """
    (r0, c0), (r1, c1) = grid.rowcol(a), grid.rowcol(b)
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 > r0 else -1
    sc = 1 if c1 > c0 else -1
    cells = [a]
    r, c = r0, c0
    err = dc - dr
    while (r, c) != (r1, c1):
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr
        cells.append(r * grid.u_w + c)
    return cells


def calibrate(t: RawTrajectory, grid: GridSpec) -> tuple[int, ...]:
    """Map a raw trajectory to a calibrated symbol sequence ending in STOP.

    Raises:
        OutsideDomainError: if any point lies outside the grid; the whole
            trajectory is rejected.
    """
    anchors = [map_point(p, grid) for p in t.points]
    out = [anchors[0]]
    for b in anchors[1:]:
        a = out[-1]
        if a == b:
            continue
        if is_adjacent(a, b, grid):
            out.append(b)
        else:
            out.extend(cell_line(a, b, grid)[1:])
    out.append(STOP)
    return tuple(out)


def is_calibrated(seq: Sequence[int], grid: GridSpec) -> bool:
    """Check the calibrated-trajectory invariants for ``seq``."""
    if len(seq) < 2 or seq[-1] != STOP:
        return False
    body = seq[:-1]
    if any(s == STOP or not (0 <= s < grid.n_cells) for s in body):
        return False
    return all(is_adjacent(a, b, grid) for a, b in zip(body, body[1:]))


def dedup_consecutive(items: Iterable[int]) -> list[int]:
    out: list[int] = []
    for x in items:
        if not out or out[-1] != x:
            out.append(x)
    return out
