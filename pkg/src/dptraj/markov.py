"""Noisy m-order Markov model over eligible anchor grams.

Rows are eligible m-grams (length-m anchor sequences whose consecutive
anchors are 8-adjacent); columns are next symbols. Because a next symbol
must be adjacent to the gram's last anchor or be STOP, each row is stored
in the 9-slot layout of :mod:`dptraj.geo` (eight neighbour directions plus
stop) rather than across all ``|AP| + 1`` columns.
"""

from __future__ import annotations

import bisect
from collections import Counter
from functools import lru_cache
from typing import Iterable, Sequence, TextIO

import numpy as np

from .geo import N_SLOTS, STOP, GridSpec, adjacent_anchors, slot_symbol
from .privacy import InvalidParameterError, NoiseSource

# Each trajectory spreads a total weight of one across its grams.
FM_SENSITIVITY = 1.0


class UndefinedContextError(ValueError):
    """The conditioning gram never occurs in the dataset."""


@lru_cache(maxsize=32)
def _tables(grid: GridSpec):
    adj = [adjacent_anchors(a, grid) for a in range(grid.n_cells)]
    # slot_syms[a, k] is the symbol in slot k of anchor a, or -2 if off-grid.
    slot_syms = np.full((grid.n_cells, N_SLOTS), -2, dtype=np.int64)
    slot_of: dict[tuple[int, int], int] = {}
    for a in range(grid.n_cells):
        for k in range(N_SLOTS):
            s = slot_symbol(a, k, grid)
            if s is not None:
                slot_syms[a, k] = s
                slot_of[(a, s)] = k
    return adj, slot_syms, slot_of


def enumerate_grams(grid: GridSpec, m: int) -> list[tuple[int, ...]]:
    """All eligible m-grams on ``grid`` in lexicographic order."""
    if m < 1:
        raise InvalidParameterError(f"Markov order must be >= 1, got {m}")
    adj = _tables(grid)[0]
    grams = [(a,) for a in range(grid.n_cells)]
    for _ in range(m - 1):
        grams = [g + (b,) for g in grams for b in adj[g[-1]]]
    return grams


class FrequencyMatrix:
    """Gram-by-next-symbol matrix in slot layout.

    ``values[i, k]`` is the entry for row ``grams[i]`` and the symbol in slot
    ``k`` of that gram's last anchor; ``mask`` marks the slots that exist.
    """

    def __init__(self, grid: GridSpec, m: int, grams: list[tuple[int, ...]],
                 values: np.ndarray):
        self.grid = grid
        self.m = m
        self.grams = grams
        self.index = {g: i for i, g in enumerate(grams)}
        self.values = values
        slot_syms = _tables(grid)[1]
        last = np.fromiter((g[-1] for g in grams), dtype=np.int64, count=len(grams))
        self.symbols = slot_syms[last] if len(grams) else np.empty((0, N_SLOTS), np.int64)
        self.mask = self.symbols != -2

    @property
    def n_rows(self) -> int:
        return len(self.grams)

    @property
    def n_eligible(self) -> int:
        return int(self.mask.sum())

    def total_mass(self) -> float:
        return float(self.values[self.mask].sum())

    def entry(self, gram: Sequence[int], symbol: int) -> float:
        i = self.index[tuple(gram)]
        slot = _tables(self.grid)[2].get((gram[-1], symbol))
        return 0.0 if slot is None else float(self.values[i, slot])

    def row(self, gram: Sequence[int]) -> dict[int, float]:
        """Eligible entries of one row keyed by next symbol."""
        i = self.index[tuple(gram)]
        return {int(s): float(v) for s, v, ok in
                zip(self.symbols[i], self.values[i], self.mask[i]) if ok}

    def to_dense(self) -> np.ndarray:
        """Full ``F_r x (|AP| + 1)`` matrix; the last column is STOP."""
        n = self.grid.n_cells
        out = np.zeros((self.n_rows, n + 1))
        rows, slots = np.nonzero(self.mask)
        cols = self.symbols[rows, slots]
        cols = np.where(cols == STOP, n, cols)
        out[rows, cols] = self.values[rows, slots]
        return out

    def _with_values(self, values: np.ndarray):
        return type(self)(self.grid, self.m, self.grams, values)


class TransitionMatrix(FrequencyMatrix):
    """Row-stochastic version of a frequency matrix, with sampling."""

    def __init__(self, grid, m, grams, values):
        super().__init__(grid, m, grams, values)
        self._cum = np.cumsum(values, axis=1).tolist()
        self._syms = self.symbols.tolist()
        positive = values > 0
        # Last slot with positive probability, per row.
        self._last = (N_SLOTS - 1 - np.argmax(positive[:, ::-1], axis=1)).tolist()

    def sample_next(self, gram: Sequence[int], u: float) -> int:
        """Next symbol for ``gram`` given a uniform draw ``u`` in [0, 1)."""
        i = self.index[tuple(gram)]
        cum = self._cum[i]
        k = bisect.bisect_right(cum, u * cum[-1])
        # u * total can round up to the total itself.
        k = min(k, self._last[i])
        return self._syms[i][k]


def build_fm(dataset: Iterable[Sequence[int]], grid: GridSpec, m: int) -> FrequencyMatrix:
    """Per-trajectory-normalized (m+1)-gram frequencies.

    A trajectory of ``L`` symbols (STOP included) has ``L - m`` gram
    positions and adds ``1 / (L - m)`` at each; trajectories with
    ``L <= m`` contribute nothing.
    """
    grams = enumerate_grams(grid, m)
    index = {g: i for i, g in enumerate(grams)}
    slot_of = _tables(grid)[2]
    rows: list[int] = []
    slots: list[int] = []
    weights: list[float] = []
    for t in dataset:
        t = tuple(t)
        n_pos = len(t) - m
        if n_pos <= 0:
            continue
        w = 1.0 / n_pos
        for i in range(n_pos):
            g = t[i:i + m]
            try:
                rows.append(index[g])
                slots.append(slot_of[(g[-1], t[i + m])])
            except KeyError:
                raise ValueError(f"trajectory is not calibrated to this grid: {t}") from None
            weights.append(w)
    values = np.zeros((len(grams), N_SLOTS))
    if rows:
        np.add.at(values, (np.asarray(rows), np.asarray(slots)), np.asarray(weights))
    return FrequencyMatrix(grid, m, grams, values)


def perturb(fm: FrequencyMatrix, eps_m: float, src: NoiseSource) -> FrequencyMatrix:
    """Add Laplace(1/eps_m) to every eligible entry; structural zeros stay 0."""
    if not eps_m > 0:
        raise InvalidParameterError(f"eps_m must be positive, got {eps_m}")
    values = fm.values.copy()
    values[fm.mask] += src.laplace(FM_SENSITIVITY / eps_m, size=fm.n_eligible)
    return fm._with_values(values)


def normalize(fm_noisy: FrequencyMatrix) -> TransitionMatrix:
    """Clamp negatives to 0 and divide each row by its sum.

    Rows with nothing left fall back to uniform over their eligible slots.
    """
    v = np.where(fm_noisy.mask, np.maximum(fm_noisy.values, 0.0), 0.0)
    sums = v.sum(axis=1, keepdims=True)
    dead = sums[:, 0] <= 0
    v[dead] = fm_noisy.mask[dead]
    sums[dead] = fm_noisy.mask[dead].sum(axis=1, keepdims=True)
    return TransitionMatrix(fm_noisy.grid, fm_noisy.m, fm_noisy.grams, v / sums)


def gram_counts(dataset: Iterable[Sequence[int]], n: int) -> Counter:
    """Occurrence counts of every contiguous n-gram across all positions."""
    counts: Counter = Counter()
    for t in dataset:
        t = tuple(t)
        for i in range(len(t) - n + 1):
            counts[t[i:i + n]] += 1
    return counts


def empirical_transition(dataset: Sequence[Sequence[int]], x: Sequence[int], p: int) -> float:
    """Unperturbed next-symbol probability ``c(x p) / c(x)``."""
    x = tuple(x)
    c_x = gram_counts(dataset, len(x))[x]
    if c_x == 0:
        raise UndefinedContextError(f"gram {x} does not occur")
    return gram_counts(dataset, len(x) + 1)[x + (p,)] / c_x


def _label(symbol: int) -> str:
    return "#" if symbol == STOP else str(symbol)


def dump_matrix(fm: FrequencyMatrix, fh: TextIO) -> None:
    """Write ``gram<TAB>symbol<TAB>value`` for every eligible entry."""
    for i, g in enumerate(fm.grams):
        label = " ".join(map(str, g))
        for k in range(N_SLOTS):
            if fm.mask[i, k]:
                fh.write(f"{label}\t{_label(int(fm.symbols[i, k]))}\t{fm.values[i, k]:.6f}\n")
