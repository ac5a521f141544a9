import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dptraj.geo import STOP, neighbors
from dptraj.prefix_tree import (NoisyPrefixTree, TreeNode, build, count_prefix, dump_tree,
                                enforce_consistency, prefix_counts)
from dptraj.privacy import InvalidParameterError, NoiseSource, level_budgets
from dptraj.toydata import random_walks

from conftest import unit_grid
from oracles import scan_count

# Sequences sharing prefixes in the style of a small prefix-tree example;
# anchors live on a 3x3 grid.
SHARED = [
    (0, 1, 2, STOP), (0, 1, 2, 5, STOP), (0, 1, 4, STOP), (0, 3, STOP),
    (4, 5, STOP), (4, 5, 8, 7, STOP), (4, STOP), (0, 1, 2, 5, 8, STOP),
]


def manual_tree(grid, m, root_children):
    """Tree from nested ``{symbol: (count, {children})}``, levels set from depth."""
    root = TreeNode(None, 0, ())

    def attach(parent, layout):
        for sym, (count, kids) in layout.items():
            node = TreeNode(sym, parent.level + 1, parent.prefix + (sym,), float(count))
            parent.children[sym] = node
            attach(node, kids)

    attach(root, root_children)
    return NoisyPrefixTree(root, grid, m, level_budgets(1.0, m + 2, 0.8))


def test_count_prefix_basics():
    assert count_prefix([], (0,)) == 0
    assert count_prefix([(0, 1, STOP), (0, 2, STOP)], (0,)) == 2
    with pytest.raises(ValueError):
        count_prefix(SHARED, ())


@pytest.mark.parametrize("prefix", [(0,), (0, 1), (0, 1, 2), (0, 1, 2, 5), (4, 5), (4, STOP),
                                    (0, 3, STOP), (8,), (0, 1, 2, STOP)])
def test_count_prefix_matches_scan(prefix):
    assert count_prefix(SHARED, prefix) == scan_count(SHARED, prefix)
    assert prefix_counts(SHARED, 5)[prefix] == scan_count(SHARED, prefix)


def test_zero_noise_counts_are_exact():
    grid = unit_grid(3, 3)
    tree = build(SHARED, grid, 2, 1.0, 0.8, NoiseSource(0, zero_noise=True))
    for node in tree.nodes():
        assert node.noisy_count == scan_count(SHARED, node.prefix)


def test_zero_count_nodes_are_created_but_not_expanded():
    grid = unit_grid(3, 3)
    tree = build(SHARED, grid, 2, 1.0, 0.8, NoiseSource(0, zero_noise=True))
    assert len(tree.root.children) == grid.n_cells
    node = tree.find((8,))
    assert node is not None and node.noisy_count == 0 and node.is_leaf
    expanded = tree.find((0,))
    assert set(expanded.children) == neighbors(0, grid)
    assert tree.find((0, 4)).noisy_count == 0 and tree.find((0, 4)).is_leaf


def test_level_one_noise_is_unbiased():
    grid = unit_grid(3, 3)
    eps_p, m = 0.6, 2
    eps1 = level_budgets(eps_p, m + 2, 0.8)[0]
    root = NoiseSource(31)
    vals = [build(SHARED, grid, m, eps_p, 0.8, root.child(i)).find((0,)).noisy_count
            for i in range(100)]
    assert abs(np.mean(vals) - 5) <= 3 * (1 / eps1) / np.sqrt(100)


def test_build_rejects_bad_order():
    with pytest.raises(InvalidParameterError):
        build(SHARED, unit_grid(3, 3), 0, 1.0, 0.8, NoiseSource(0))


def test_rescale_proportional(grid23):
    tree = manual_tree(grid23, 2, {0: (10, {1: (3, {}), 3: (2, {})})})
    enforce_consistency(tree, 10)
    assert tree.find((0, 1)).noisy_count == pytest.approx(6)
    assert tree.find((0, 3)).noisy_count == pytest.approx(4)


def test_rescale_after_clamp(grid23):
    tree = manual_tree(grid23, 2, {0: (10, {1: (-1, {}), 3: (5, {})})})
    enforce_consistency(tree, 10)
    assert tree.find((0, 1)).noisy_count == 0
    assert tree.find((0, 3)).noisy_count == pytest.approx(10)


def test_uniform_fallback_when_all_children_clamp(grid23):
    tree = manual_tree(grid23, 2, {0: (9, {1: (-2, {}), 3: (0, {}), 4: (-0.5, {})})})
    enforce_consistency(tree, 9)
    assert [tree.find((0, s)).noisy_count for s in (1, 3, 4)] == pytest.approx([3, 3, 3])


def test_root_pinned_and_level_one_rescaled(grid23):
    tree = manual_tree(grid23, 1, {0: (4, {}), 1: (1, {}), 2: (-3, {})})
    enforce_consistency(tree, 10)
    assert tree.root.noisy_count == 10
    assert [tree.find((s,)).noisy_count for s in (0, 1, 2)] == pytest.approx([8, 2, 0])


def check_structure(tree, grid):
    for node in tree.nodes():
        assert node.level == len(node.prefix) <= tree.height - 1
        if node.ends_with_stop:
            assert node.is_leaf
        for sym, child in node.children.items():
            assert child.level == node.level + 1
            assert sym in neighbors(node.symbol, grid)
    assert set(tree.root.children) == set(range(grid.n_cells))


def check_consistent(tree, n, tol=1e-9):
    assert tree.root.noisy_count == n
    for node in [tree.root, *tree.nodes()]:
        assert node.noisy_count >= 0
        if node.children:
            total = sum(c.noisy_count for c in node.children.values())
            assert abs(total - node.noisy_count) <= tol * max(1.0, node.noisy_count)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(2, 4), st.integers(1, 3), st.integers(0, 80),
       st.floats(0.05, 5.0), st.integers(0, 2**32 - 1))
def test_noisy_tree_structure_and_consistency(u_h, u_w, m, n, eps, seed):
    grid = unit_grid(u_h, u_w)
    data = random_walks(grid, n, 6, np.random.default_rng(seed))
    tree = build(data, grid, m, eps, 0.8, NoiseSource(seed))
    check_structure(tree, grid)
    enforce_consistency(tree, len(data))
    check_structure(tree, grid)
    check_consistent(tree, len(data))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 4), st.integers(2, 4), st.integers(0, 40), st.integers(0, 2**32 - 1))
def test_adding_a_trajectory_moves_only_its_prefix_path(u_h, u_w, n, seed):
    grid = unit_grid(u_h, u_w)
    rng = np.random.default_rng(seed)
    data = random_walks(grid, n, 6, rng)
    extra = random_walks(grid, 1, 6, rng)[0]
    before, after = prefix_counts(data, 4), prefix_counts(data + [extra], 4)
    own = {extra[:k] for k in range(1, min(4, len(extra)) + 1)}
    for prefix in set(before) | set(after):
        assert after[prefix] - before[prefix] == (1 if prefix in own else 0)


def test_dump_tree_format():
    grid = unit_grid(3, 3)
    tree = enforce_consistency(build(SHARED, grid, 1, 1.0, 0.8,
                                     NoiseSource(0, zero_noise=True)), len(SHARED))
    buf = io.StringIO()
    dump_tree(tree, buf, min_count=1)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "root\t8.000000"
    assert "  0\t5.000000" in lines
    assert "    #\t0.000000" not in lines
    assert "    1\t4.000000" in lines
    assert "  4\t3.000000" in lines
