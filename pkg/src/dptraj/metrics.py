"""Utility metrics comparing a real and a synthetic trajectory dataset.

All metrics work at the cell level of an evaluation grid. Each trajectory
is mapped point by point to cells and consecutive repeats are collapsed;
points outside the evaluation grid are dropped.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geo import GridSpec, OutsideDomainError, RawTrajectory, dedup_consecutive, map_point

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_008.8


class EmptyDatasetError(ValueError):
    pass


class DegenerateDatasetError(ValueError):
    pass


class InvalidDistributionError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    grid: GridSpec
    sanity_fraction: float = 0.001
    top_n: int = 20
    top_k: int = 200
    pattern_len_min: int = 2
    pattern_len_max: int = 8
    length_buckets: int = 20

    def __post_init__(self):
        if not self.sanity_fraction > 0:
            raise ValueError("sanity_fraction must be positive")
        if min(self.top_n, self.top_k, self.length_buckets) < 1:
            raise ValueError("top_n, top_k and length_buckets must be positive")
        if not 2 <= self.pattern_len_min <= self.pattern_len_max:
            raise ValueError("need 2 <= pattern_len_min <= pattern_len_max")


@dataclass
class MetricsReport:
    location_avre: float
    location_kt: float
    fp_avre: float
    fp_kt: float
    trip_error: float
    length_error: float
    fp_k: int
    top_n_proportions: list[tuple[int, float, float]] = field(default_factory=list)

    SCALARS = ("location_avre", "location_kt", "fp_avre", "fp_kt", "trip_error", "length_error")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["top_n_proportions"] = [list(row) for row in self.top_n_proportions]
        return d


def cell_sequence(t: RawTrajectory, grid: GridSpec) -> list[int]:
    cells = []
    for p in t.points:
        try:
            cells.append(map_point(p, grid))
        except OutsideDomainError:
            continue
    return dedup_consecutive(cells)


def cell_sequences(dataset: Iterable[RawTrajectory], grid: GridSpec) -> list[list[int]]:
    return [cell_sequence(t, grid) for t in dataset]


def _popularity(seqs: Iterable[Sequence[int]], n_cells: int) -> np.ndarray:
    pop = np.zeros(n_cells, dtype=np.int64)
    for s in seqs:
        np.add.at(pop, np.asarray(s, dtype=np.int64), 1)
    return pop


def cell_popularity(dataset: Iterable[RawTrajectory], grid: GridSpec) -> np.ndarray:
    """Visit events per cell: re-entering a cell counts again."""
    return _popularity(cell_sequences(dataset, grid), grid.n_cells)


def relative_errors(pop: np.ndarray, pop_syn: np.ndarray, sanity: float) -> np.ndarray:
    return np.abs(pop - pop_syn) / np.maximum(pop, sanity)


def location_avre(dataset, dataset_syn, cfg: EvalConfig) -> float:
    if len(dataset) == 0:
        raise EmptyDatasetError("real dataset is empty")
    pop = cell_popularity(dataset, cfg.grid)
    pop_syn = cell_popularity(dataset_syn, cfg.grid)
    return float(relative_errors(pop, pop_syn, cfg.sanity_fraction * len(dataset)).mean())


def _top_cells(pop: np.ndarray, n: int) -> list[int]:
    order = sorted(range(len(pop)), key=lambda i: (-pop[i], i))
    return order[:n]


def visit_proportion(dataset, cfg: EvalConfig, cells: Sequence[int] | None = None):
    """``(cell, share of all visits)`` for the top-n cells, or for ``cells``."""
    pop = cell_popularity(dataset, cfg.grid)
    return _proportions(pop, cfg.top_n, cells)


def _proportions(pop, n, cells=None):
    total = pop.sum()
    if total <= 0:
        raise DegenerateDatasetError("dataset has no cell visits")
    if cells is None:
        cells = _top_cells(pop, n)
    return [(int(c), float(pop[c] / total)) for c in cells]


def top_n_proportions(dataset, dataset_syn, cfg: EvalConfig) -> list[tuple[int, float, float]]:
    """Top-n cells of the real data with real and synthetic visit shares."""
    pop = cell_popularity(dataset, cfg.grid)
    pop_syn = cell_popularity(dataset_syn, cfg.grid)
    return _paired_proportions(pop, pop_syn, cfg.top_n)


def _paired_proportions(pop, pop_syn, n):
    real = _proportions(pop, n)
    syn_total = pop_syn.sum()
    return [(c, p, float(pop_syn[c] / syn_total) if syn_total > 0 else 0.0)
            for c, p in real]


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    """Concordant minus discordant pairs over ``n(n-1)/2``.

    Pairs tied in either vector count as neither, and the denominator does
    not shrink for them.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("kendall_tau needs vectors of equal length")
    n = len(x)
    if n < 2:
        return math.nan
    score = 0
    for i in range(n - 1):
        score += int((np.sign(x[i + 1:] - x[i]) * np.sign(y[i + 1:] - y[i])).sum())
    return score / (n * (n - 1) / 2)


def location_kt(dataset, dataset_syn, cfg: EvalConfig) -> float:
    return kendall_tau(cell_popularity(dataset, cfg.grid),
                       cell_popularity(dataset_syn, cfg.grid))


def _windows(seq: Sequence[int], lo: int, hi: int) -> set[tuple[int, ...]]:
    seq = tuple(seq)
    out = set()
    for n in range(lo, min(hi, len(seq)) + 1):
        for i in range(len(seq) - n + 1):
            out.add(seq[i:i + n])
    return out


def _pattern_supports(seqs, lo, hi) -> Counter:
    sup: Counter = Counter()
    for s in seqs:
        sup.update(_windows(s, lo, hi))
    return sup


def _support_of(seqs, patterns) -> dict[tuple[int, ...], int]:
    wanted = set(patterns)
    lengths = sorted({len(p) for p in wanted})
    sup = dict.fromkeys(patterns, 0)
    for s in seqs:
        s = tuple(s)
        hit = set()
        for n in lengths:
            for i in range(len(s) - n + 1):
                w = s[i:i + n]
                if w in wanted:
                    hit.add(w)
        for w in hit:
            sup[w] += 1
    return sup


def _top_k(sup: Counter, k: int):
    return sorted(sup.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


def mine_top_k(dataset, cfg: EvalConfig) -> list[tuple[tuple[int, ...], int]]:
    """Top-k contiguous cell patterns by the number of trajectories containing them."""
    seqs = cell_sequences(dataset, cfg.grid)
    return _top_k(_pattern_supports(seqs, cfg.pattern_len_min, cfg.pattern_len_max), cfg.top_k)


def _fp_scores(top, seqs_syn):
    if not top:
        return math.nan, math.nan
    sup_syn = _support_of(seqs_syn, [p for p, _ in top])
    real = np.array([s for _, s in top], dtype=float)
    syn = np.array([sup_syn[p] for p, _ in top], dtype=float)
    avre = float((np.abs(real - syn) / real).mean())
    return avre, kendall_tau(real, syn)


def fp_avre(dataset, dataset_syn, cfg: EvalConfig) -> float:
    top = mine_top_k(dataset, cfg)
    return _fp_scores(top, cell_sequences(dataset_syn, cfg.grid))[0]


def fp_kt(dataset, dataset_syn, cfg: EvalConfig) -> float:
    top = mine_top_k(dataset, cfg)
    return _fp_scores(top, cell_sequences(dataset_syn, cfg.grid))[1]


def jsd(p: Sequence[float], q: Sequence[float]) -> float:
    """Base-2 Jensen-Shannon divergence, in [0, 1]."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise InvalidDistributionError("distributions must be 1-D and aligned")
    for d in (p, q):
        if (d < 0).any() or abs(d.sum() - 1.0) > 1e-9:
            raise InvalidDistributionError("distribution must be non-negative and sum to 1")
    mid = (p + q) / 2

    def kl(a):
        nz = a > 0
        return float((a[nz] * np.log2(a[nz] / mid[nz])).sum())

    return min(max(0.5 * kl(p) + 0.5 * kl(q), 0.0), 1.0)


def _aligned(ca: Counter, cb: Counter):
    keys = sorted(set(ca) | set(cb))
    ta, tb = sum(ca.values()), sum(cb.values())
    return ([ca[k] / ta for k in keys], [cb[k] / tb for k in keys])


def _trips(seqs) -> Counter:
    return Counter((s[0], s[-1]) for s in seqs if s)


def trip_error(dataset, dataset_syn, cfg: EvalConfig) -> float:
    """JSD between the (start cell, end cell) distributions."""
    return _trip_error(cell_sequences(dataset, cfg.grid), cell_sequences(dataset_syn, cfg.grid))


def _trip_error(seqs, seqs_syn):
    a, b = _trips(seqs), _trips(seqs_syn)
    if not a or not b:
        raise EmptyDatasetError("trip error needs trajectories in both datasets")
    return jsd(*_aligned(a, b))


def haversine_m(lon1, lat1, lon2, lat2):
    lon1, lat1, lon2, lat2 = map(np.radians, (lon1, lat1, lon2, lat2))
    a = (np.sin((lat2 - lat1) / 2) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2)
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.minimum(a, 1.0)))


def trip_length(t: RawTrajectory) -> float:
    """Sum of great-circle distances between consecutive points, in meters."""
    if len(t.points) < 2:
        return 0.0
    xy = np.array([(p.lon, p.lat) for p in t.points])
    return float(haversine_m(xy[:-1, 0], xy[:-1, 1], xy[1:, 0], xy[1:, 1]).sum())


def _bucketize(lengths: np.ndarray, lo: float, hi: float, n: int) -> np.ndarray:
    width = (hi - lo) / n
    if width == 0:
        idx = np.where(lengths <= lo, 0, n - 1)
    else:
        idx = np.clip(np.floor((lengths - lo) / width), 0, n - 1).astype(int)
    return np.bincount(idx, minlength=n) / len(lengths)


def length_error(dataset, dataset_syn, cfg: EvalConfig) -> float:
    """JSD between trip-length histograms on buckets spanning the real range."""
    if len(dataset) == 0 or len(dataset_syn) == 0:
        raise EmptyDatasetError("length error needs trajectories in both datasets")
    real = np.array([trip_length(t) for t in dataset])
    syn = np.array([trip_length(t) for t in dataset_syn])
    lo, hi = float(real.min()), float(real.max())
    n = cfg.length_buckets
    return jsd(_bucketize(real, lo, hi, n), _bucketize(syn, lo, hi, n))


def evaluate(dataset: Sequence[RawTrajectory], dataset_syn: Sequence[RawTrajectory],
             cfg: EvalConfig) -> MetricsReport:
    """Compute every metric, mapping each dataset to cells only once.

    An empty (or fully off-grid) synthetic dataset scores the maximal
    divergence of 1 on the trip and length errors instead of failing.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("real dataset is empty")
    seqs = cell_sequences(dataset, cfg.grid)
    seqs_syn = cell_sequences(dataset_syn, cfg.grid)
    pop = _popularity(seqs, cfg.grid.n_cells)
    pop_syn = _popularity(seqs_syn, cfg.grid.n_cells)
    top = _top_k(_pattern_supports(seqs, cfg.pattern_len_min, cfg.pattern_len_max), cfg.top_k)
    f_avre, f_kt = _fp_scores(top, seqs_syn)
    if any(seqs_syn):
        trip, length = _trip_error(seqs, seqs_syn), length_error(dataset, dataset_syn, cfg)
    else:
        log.warning("synthetic dataset has no on-grid trajectories; "
                    "trip and length errors set to 1")
        trip = length = 1.0
    return MetricsReport(
        location_avre=float(relative_errors(pop, pop_syn,
                                            cfg.sanity_fraction * len(dataset)).mean()),
        location_kt=kendall_tau(pop, pop_syn),
        fp_avre=f_avre,
        fp_kt=f_kt,
        trip_error=trip,
        length_error=length,
        fp_k=len(top),
        top_n_proportions=_paired_proportions(pop, pop_syn, cfg.top_n),
    )
