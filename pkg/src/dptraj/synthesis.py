"""Synthetic trajectory generation from a finalized tree and transition matrix.

Generation reads only the noisy model, never the source data, so it is
pure post-processing and spends no privacy budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

from .geo import STOP, GeoPoint, GridSpec, RawTrajectory, anchor_centroid
from .markov import TransitionMatrix
from .prefix_tree import NoisyPrefixTree, TreeNode
from .privacy import NoiseSource


class InvalidConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthesisConfig:
    """Generation settings.

    Attributes:
        l_max: maximum symbols per synthetic trajectory, STOP included.
        jitter: place output points uniformly inside their cell instead of
            at the centroid.
    """

    l_max: int
    jitter: bool = False


@dataclass
class SyntheticDataset:
    calibrated: list[tuple[int, ...]]
    grid: GridSpec
    jitter_draws: list[list[tuple[float, float]]] | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.calibrated)

    @cached_property
    def trajectories(self) -> list[RawTrajectory]:
        width = len(str(max(len(self.calibrated) - 1, 0)))
        out = []
        for i, seq in enumerate(self.calibrated):
            offsets = self.jitter_draws[i] if self.jitter_draws is not None else None
            points = tuple(_to_point(a, self.grid, None if offsets is None else offsets[j])
                           for j, a in enumerate(seq[:-1]))
            out.append(RawTrajectory(f"syn{i:0{width}d}", points))
        return out


def _to_point(a: int, grid: GridSpec, offset: tuple[float, float] | None) -> GeoPoint:
    if offset is None:
        return anchor_centroid(a, grid)
    row, col = grid.rowcol(a)
    lo = grid.bbox.min_corner
    return GeoPoint(lo.lon + (col + offset[0]) * grid.cell_width,
                    lo.lat + (row + offset[1]) * grid.cell_height)


def round_count(c: float) -> int:
    """Round a non-negative count half away from zero."""
    if c < 0:
        raise ValueError(f"count must be non-negative, got {c}")
    return int(math.floor(c + 0.5))


class _Uniforms:
    """Buffered uniform draws; refills in blocks to avoid per-call overhead."""

    def __init__(self, src: NoiseSource, block: int = 4096):
        self._src = src
        self._block = block
        self._buf: list[float] = []
        self._pos = 0

    def next(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self._src.uniform(self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


def _continue(prefix: Sequence[int], q: TransitionMatrix, m: int, l_max: int,
              draws: _Uniforms) -> tuple[int, ...]:
    seq = list(prefix)
    while True:
        if len(seq) >= l_max - 1:
            seq.append(STOP)
            break
        nxt = q.sample_next(seq[-m:], draws.next())
        seq.append(nxt)
        if nxt == STOP:
            break
    return tuple(seq)


def emit_leaf(leaf: TreeNode, tree: NoisyPrefixTree, q: TransitionMatrix,
              l_max: int, draws: _Uniforms) -> list[tuple[int, ...]]:
    """Trajectories generated from one tree leaf.

    Leaves ending in STOP are copied verbatim. Other leaves at level ``m``
    or deeper (the last level, or pruned early) are extended by the Markov
    chain from their last ``m`` anchors; shallower leaves get a forced STOP.
    """
    n = round_count(leaf.noisy_count)
    if n == 0:
        return []
    if leaf.ends_with_stop:
        return [leaf.prefix] * n
    if leaf.level < tree.m:
        return [leaf.prefix + (STOP,)] * n
    return [_continue(leaf.prefix, q, tree.m, l_max, draws) for _ in range(n)]


def generate(tree: NoisyPrefixTree, q: TransitionMatrix, cfg: SynthesisConfig,
             src: NoiseSource) -> SyntheticDataset:
    """Generate a synthetic dataset, visiting leaves in depth-first order."""
    if cfg.l_max < tree.height:
        raise InvalidConfigError(f"l_max={cfg.l_max} is below tree height {tree.height}")
    if not tree.consistent:
        raise InvalidConfigError("enforce consistency on the tree before generating")
    if q.m != tree.m or q.grid != tree.grid:
        raise InvalidConfigError("tree and transition matrix disagree on grid or order")

    draws = _Uniforms(src.child(0))
    out: list[tuple[int, ...]] = []
    for leaf in tree.leaves():
        out.extend(emit_leaf(leaf, tree, q, cfg.l_max, draws))

    jitter = None
    if cfg.jitter:
        jsrc = src.child(1)
        jitter = []
        for seq in out:
            u = jsrc.uniform((len(seq) - 1, 2)).tolist()
            jitter.append([tuple(x) for x in u])
    return SyntheticDataset(out, tree.grid, jitter)
