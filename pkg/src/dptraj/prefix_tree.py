"""Noisy prefix tree over the initial segments of calibrated trajectories.

The tree has height ``h = m + 2``: level 1 holds one node per anchor and the
deepest nodes sit at level ``h - 1``, carrying prefixes of ``m + 1``
symbols. Every count is the true prefix count plus Laplace noise at the
level's budget; a node is expanded over its neighbour symbols only while
its noisy count is at least 1.
"""

from __future__ import annotations

from collections import Counter, deque
from typing import Iterable, Iterator, Sequence, TextIO

from .geo import STOP, GridSpec, adjacent_anchors
from .privacy import InvalidParameterError, NoiseSource, level_budgets

# Prefix counts change by at most one when a trajectory is added or removed.
PREFIX_SENSITIVITY = 1.0


class TreeNode:
    __slots__ = ("symbol", "level", "noisy_count", "children", "prefix")

    def __init__(self, symbol, level, prefix, noisy_count=0.0):
        self.symbol = symbol
        self.level = level
        self.prefix = prefix
        self.noisy_count = noisy_count
        self.children: dict[int, TreeNode] = {}

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def ends_with_stop(self) -> bool:
        return self.symbol == STOP

    def __repr__(self):
        return f"TreeNode(prefix={self.prefix}, count={self.noisy_count:.4g})"


class NoisyPrefixTree:
    def __init__(self, root: TreeNode, grid: GridSpec, m: int,
                 budgets: tuple[float, ...]):
        self.root = root
        self.grid = grid
        self.m = m
        self.budgets = budgets
        self.consistent = False

    @property
    def height(self) -> int:
        return self.m + 2

    def nodes(self) -> Iterator[TreeNode]:
        """All non-root nodes in depth-first order, children in symbol order."""
        stack = list(reversed(self.root.children.values()))
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children.values()))

    def leaves(self) -> Iterator[TreeNode]:
        return (n for n in self.nodes() if n.is_leaf)

    def find(self, prefix: Sequence[int]) -> TreeNode | None:
        node = self.root
        for s in prefix:
            node = node.children.get(s)
            if node is None:
                return None
        return node

    def __len__(self):
        return sum(1 for _ in self.nodes())


def count_prefix(dataset: Iterable[Sequence[int]], prefix: Sequence[int]) -> int:
    """Number of trajectories whose leading symbols equal ``prefix``."""
    prefix = tuple(prefix)
    if not prefix:
        raise ValueError("prefix must be non-empty")
    k = len(prefix)
    return sum(1 for t in dataset if tuple(t[:k]) == prefix)


def prefix_counts(dataset: Iterable[Sequence[int]], max_len: int) -> Counter:
    """Counts of every prefix of length ``1 .. max_len`` in one pass."""
    counts: Counter = Counter()
    for t in dataset:
        t = tuple(t)
        for k in range(1, min(max_len, len(t)) + 1):
            counts[t[:k]] += 1
    return counts


def child_symbols(a: int, grid: GridSpec) -> list[int]:
    return adjacent_anchors(a, grid) + [STOP]


def build(dataset: Sequence[Sequence[int]], grid: GridSpec, m: int,
          eps_p: float, delta: float, src: NoiseSource) -> NoisyPrefixTree:
    """Build the noisy prefix tree, level by level.

    Args:
        dataset: calibrated trajectories (STOP-terminated symbol tuples).
        grid: the reference grid the trajectories were calibrated on.
        m: Markov order; the tree height is ``m + 2``.
        eps_p: budget for the whole tree, split across levels.
        delta: allocation parameter for the per-level split.
        src: noise stream; one Laplace draw per materialized node.

    Returns:
        The tree with raw noisy counts. Call :func:`enforce_consistency`
        before sampling from it.
    """
    if m < 1:
        raise InvalidParameterError(f"Markov order must be >= 1, got {m}")
    h = m + 2
    budgets = level_budgets(eps_p, h, delta)
    counts = prefix_counts(dataset, h - 1)

    root = TreeNode(None, 0, (), float(len(dataset)))
    frontier = []
    for a in range(grid.n_cells):
        node = TreeNode(a, 1, (a,))
        root.children[a] = node
        frontier.append(node)

    for level in range(1, h):
        noise = src.laplace(PREFIX_SENSITIVITY / budgets[level - 1], size=len(frontier))
        expand = level < h - 1
        next_frontier = []
        for node, z in zip(frontier, noise):
            node.noisy_count = counts.get(node.prefix, 0) + float(z)
            if expand and node.symbol != STOP and node.noisy_count >= 1:
                for s in child_symbols(node.symbol, grid):
                    child = TreeNode(s, level + 1, node.prefix + (s,))
                    node.children[s] = child
                    next_frontier.append(child)
        frontier = next_frontier

    return NoisyPrefixTree(root, grid, m, budgets)


def _rescale(children: list[TreeNode], parent_count: float) -> None:
    total = sum(c.noisy_count for c in children)
    if total > 0:
        for c in children:
            # Multiply before dividing: exact whenever the result is integral.
            c.noisy_count = c.noisy_count * parent_count / total
    else:
        share = parent_count / len(children)
        for c in children:
            c.noisy_count = share


def enforce_consistency(tree: NoisyPrefixTree, n: int) -> NoisyPrefixTree:
    """Make every expanded node's count equal the sum of its children's.

    Negative counts are clamped to 0, the root is pinned to ``n``, and each
    sibling group is rescaled to its parent's final count, top-down. A
    sibling group whose counts are all 0 splits the parent's count evenly.
    Modifies ``tree`` in place and returns it.
    """
    if n < 0:
        raise ValueError(f"dataset size must be >= 0, got {n}")
    for node in tree.nodes():
        if node.noisy_count < 0:
            node.noisy_count = 0.0
    tree.root.noisy_count = float(n)

    queue = deque([tree.root])
    while queue:
        node = queue.popleft()
        if node.children:
            kids = list(node.children.values())
            _rescale(kids, node.noisy_count)
            queue.extend(kids)
    tree.consistent = True
    return tree


def _label(symbol: int) -> str:
    return "#" if symbol == STOP else str(symbol)


def dump_tree(tree: NoisyPrefixTree, fh: TextIO, min_count: float = 0.0) -> None:
    """Write one indented ``symbol<TAB>count`` line per node.

    Subtrees whose count is below ``min_count`` are omitted.
    """
    fh.write(f"root\t{tree.root.noisy_count:.6f}\n")
    stack = list(reversed(tree.root.children.values()))
    while stack:
        node = stack.pop()
        if node.noisy_count < min_count:
            continue
        fh.write("  " * node.level + f"{_label(node.symbol)}\t{node.noisy_count:.6f}\n")
        stack.extend(reversed(node.children.values()))
