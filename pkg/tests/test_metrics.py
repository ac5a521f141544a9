import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dptraj.geo import GeoPoint, RawTrajectory, anchor_centroid
from dptraj.metrics import (DegenerateDatasetError, EmptyDatasetError, EvalConfig,
                            InvalidDistributionError, cell_popularity, evaluate, fp_avre, fp_kt,
                            haversine_m, jsd, kendall_tau, length_error, location_avre,
                            location_kt, mine_top_k, relative_errors, top_n_proportions,
                            trip_error, trip_length, visit_proportion)

from conftest import unit_grid
from oracles import brute_popularity, brute_kt, brute_top_k

JSD_HALF_VS_POINT = 1.5 - 0.75 * math.log2(3)  # ~0.3112781244591328


def trajs(grid, cell_lists, prefix="t"):
    return [RawTrajectory(f"{prefix}{i}", tuple(anchor_centroid(c, grid) for c in cells))
            for i, cells in enumerate(cell_lists)]


def eval_cfg(grid, **kw):
    return EvalConfig(grid, **kw)


# Popularities (4, 7, 5, 3), pattern supports (4, 3, 2): all distinct.
DISTINCT = [[0, 1]] * 4 + [[1, 2]] * 3 + [[2, 3]] * 2 + [[3]]


cell_lists = st.lists(st.lists(st.integers(0, 15), min_size=1, max_size=10), min_size=1,
                      max_size=50)


def test_popularity_examples(grid23):
    assert not cell_popularity([], grid23).any()
    one = [RawTrajectory("a", (GeoPoint(0.2, 0.2), GeoPoint(0.7, 0.9), GeoPoint(0.5, 0.5)))]
    assert cell_popularity(one, grid23).tolist() == [1, 0, 0, 0, 0, 0]
    back_and_forth = trajs(grid23, [[0, 0, 1, 1, 0]])
    assert cell_popularity(back_and_forth, grid23).tolist() == [2, 1, 0, 0, 0, 0]


def test_points_outside_eval_grid_are_dropped(grid23):
    t = RawTrajectory("a", (GeoPoint(0.5, 0.5), GeoPoint(10.0, 10.0), GeoPoint(0.5, 0.5)))
    assert cell_popularity([t], grid23).tolist() == [1, 0, 0, 0, 0, 0]


def test_relative_error_examples():
    assert relative_errors(np.array([100]), np.array([50]), 10).tolist() == [0.5]
    assert relative_errors(np.array([2]), np.array([8]), 10).tolist() == [0.6]


def test_location_avre_uses_sanity_fraction(grid23):
    real = trajs(grid23, [[0]] * 10)
    syn = trajs(grid23, [[0]] * 5 + [[1]] * 2)
    # lambda = 0.1 * 10 = 1: cell 0 has RE 0.5, cell 1 has RE 2.
    cfg = eval_cfg(grid23, sanity_fraction=0.1)
    assert location_avre(real, syn, cfg) == pytest.approx(2.5 / 6)
    with pytest.raises(EmptyDatasetError):
        location_avre([], syn, cfg)


def test_visit_proportions():
    grid = unit_grid(2, 2)
    cfg = eval_cfg(grid, top_n=4)
    uniform = trajs(grid, [[0, 1, 2, 3]])
    assert [p for _, p in visit_proportion(uniform, cfg)] == [0.25] * 4
    props = visit_proportion(trajs(grid, DISTINCT), cfg)
    assert [c for c, _ in props] == [1, 2, 0, 3]
    assert sum(p for _, p in props) == pytest.approx(1.0)
    with pytest.raises(DegenerateDatasetError):
        visit_proportion([RawTrajectory("x", (GeoPoint(9.0, 9.0),))], cfg)


def test_top_n_pairs_real_and_synthetic():
    grid = unit_grid(2, 2)
    rows = top_n_proportions(trajs(grid, DISTINCT), trajs(grid, [[3, 2]]), eval_cfg(grid, top_n=2))
    assert rows == [(1, 7 / 19, 0.0), (2, 5 / 19, 0.5)]


def test_kendall_tau_examples():
    assert kendall_tau([3, 1, 2], [3, 2, 1]) == 1 / 3
    assert kendall_tau([1, 2, 3, 4], [1, 2, 3, 4]) == 1.0
    assert kendall_tau([1, 2, 3, 4], [4, 3, 2, 1]) == -1.0
    # One tied pair out of three: neither concordant nor discordant.
    assert kendall_tau([1, 1, 2], [1, 2, 3]) == pytest.approx(2 / 3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=2, max_size=30))
def test_kendall_tau_matches_pair_enumeration(pairs):
    x, y = zip(*pairs)
    kt = kendall_tau(x, y)
    assert kt == pytest.approx(brute_kt(x, y), abs=1e-12)
    assert -1 <= kt <= 1


@settings(max_examples=50, deadline=None)
@given(cell_lists, cell_lists)
def test_popularity_and_location_kt_match_brute_force(real, syn):
    grid = unit_grid(4, 4)
    cfg = eval_cfg(grid)
    assert cell_popularity(trajs(grid, real), grid).tolist() == brute_popularity(real, 16)
    assert location_kt(trajs(grid, real), trajs(grid, syn), cfg) == pytest.approx(
        brute_kt(brute_popularity(real, 16), brute_popularity(syn, 16)), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(cell_lists, st.integers(1, 30), st.integers(2, 4), st.integers(0, 4))
def test_top_k_matches_exhaustive_windows(real, k, lo, extra):
    grid = unit_grid(4, 4)
    cfg = eval_cfg(grid, top_k=k, pattern_len_min=lo, pattern_len_max=lo + extra)
    assert mine_top_k(trajs(grid, real), cfg) == brute_top_k(real, k, lo, lo + extra)


def test_top_k_hand_built_corpus():
    grid = unit_grid(4, 4)
    rng = np.random.default_rng(11)
    corpus = [rng.integers(0, 16, size=int(rng.integers(2, 9))).tolist() for _ in range(20)]
    cfg = eval_cfg(grid, top_k=200)
    assert mine_top_k(trajs(grid, corpus), cfg) == brute_top_k(corpus, 200, 2, 8)


def test_pattern_examples(grid23):
    cfg = eval_cfg(grid23)
    assert sorted(mine_top_k(trajs(grid23, [[0, 1, 2]]), cfg)) == \
        [((0, 1), 1), ((0, 1, 2), 1), ((1, 2), 1)]
    twice = dict(mine_top_k(trajs(grid23, [[0, 1, 0, 1]]), cfg))
    assert twice[(0, 1)] == 1


def test_fp_metric_examples(grid23):
    cfg = eval_cfg(grid23, top_k=3)
    # Pattern 0-1 in 10, 1-2 in 5, 2-5 in 2 real trajectories; 9, 6, 1 synthetic.
    real = trajs(grid23, [[0, 1]] * 10 + [[1, 2]] * 5 + [[2, 5]] * 2)
    syn = trajs(grid23, [[0, 1]] * 9 + [[1, 2]] * 6 + [[2, 5]] * 1)
    assert fp_kt(real, syn, cfg) == 1.0
    assert fp_avre(real, syn, cfg) == pytest.approx((0.1 + 0.2 + 0.5) / 3)
    unrelated = trajs(grid23, [[3, 4]] * 5)
    assert fp_avre(real, unrelated, cfg) == 1.0


def test_fp_metrics_without_patterns(grid23):
    report = evaluate(trajs(grid23, [[0], [1]]), trajs(grid23, [[0]]), eval_cfg(grid23))
    assert report.fp_k == 0
    assert math.isnan(report.fp_avre) and math.isnan(report.fp_kt)


def test_jsd_examples():
    assert jsd([0.5, 0.5], [1, 0]) == pytest.approx(JSD_HALF_VS_POINT, abs=1e-6)
    assert jsd([0.5, 0.5], [1, 0]) == pytest.approx(0.3112781244591328, abs=1e-12)
    assert jsd([1, 0], [0, 1]) == 1.0
    assert jsd([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]) == 0.0
    for bad in ([0.5, 0.6], [-0.1, 1.1], [[0.5, 0.5]]):
        with pytest.raises(InvalidDistributionError):
            jsd(bad, bad)
    with pytest.raises(InvalidDistributionError):
        jsd([1.0], [0.5, 0.5])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=8).filter(lambda v: sum(v) > 0),
       st.integers(0, 2**32 - 1))
def test_jsd_symmetric_and_bounded(w, seed):
    p = np.array(w) / sum(w)
    q = np.random.default_rng(seed).dirichlet(np.ones(len(w)))
    assert jsd(p, q) == pytest.approx(jsd(q, p), abs=1e-12)
    assert 0 <= jsd(p, q) <= 1


def test_trip_error_examples(grid23):
    cfg = eval_cfg(grid23)
    a = trajs(grid23, [[0, 1, 2]])
    assert trip_error(a, a, cfg) == 0
    assert trip_error(a, trajs(grid23, [[3, 4]]), cfg) == 1.0
    half = trajs(grid23, [[0, 1, 2], [3, 4]])
    assert trip_error(half, a, cfg) == pytest.approx(JSD_HALF_VS_POINT, abs=1e-12)
    with pytest.raises(EmptyDatasetError):
        trip_error(a, [], cfg)


def test_haversine_and_trip_length():
    degree = 6_371_008.8 * math.pi / 180
    assert haversine_m(0.0, 0.0, 1.0, 0.0) == pytest.approx(degree)
    t = RawTrajectory("a", (GeoPoint(0, 0), GeoPoint(1, 0), GeoPoint(1, 1)))
    assert trip_length(t) == pytest.approx(2 * degree)
    assert trip_length(RawTrajectory("b", (GeoPoint(3, 3),))) == 0.0


def line(i, length):
    return RawTrajectory(f"l{i}", (GeoPoint(0.0, 0.0), GeoPoint(length, 0.0)))


def test_length_error_examples(grid23):
    cfg = eval_cfg(grid23)
    same = [line(i, 1.0) for i in range(3)]
    assert length_error(same, same, cfg) == 0.0
    assert length_error(same, [line(0, 1.0)], cfg) == 0.0
    real = [line(0, 0.0), line(1, 2.0)]
    assert length_error(real, [line(2, 1.05)], cfg) == 1.0
    # Synthetic lengths beyond the real span clamp into the end buckets.
    assert length_error(real, [line(3, 0.0), line(4, 2.9)], cfg) == 0.0
    with pytest.raises(EmptyDatasetError):
        length_error(real, [], cfg)


def test_self_comparison_is_ideal():
    grid = unit_grid(2, 2)
    data = trajs(grid, DISTINCT)
    cfg = eval_cfg(grid)
    report = evaluate(data, data, cfg)
    assert report.location_avre == 0
    assert report.location_kt == 1
    assert report.fp_avre == 0
    assert report.fp_kt == 1
    assert report.trip_error == 0
    assert report.length_error == 0
    assert report.fp_k == 3
    assert all(r == s for _, r, s in report.top_n_proportions)


def test_evaluate_agrees_with_individual_metrics():
    grid = unit_grid(4, 4)
    rng = np.random.default_rng(2)
    real = trajs(grid, [rng.integers(0, 16, size=5).tolist() for _ in range(40)])
    syn = trajs(grid, [rng.integers(0, 16, size=4).tolist() for _ in range(30)], "s")
    cfg = eval_cfg(grid, top_k=25)
    rep = evaluate(real, syn, cfg)
    assert rep.location_avre == location_avre(real, syn, cfg)
    assert rep.location_kt == location_kt(real, syn, cfg)
    assert rep.fp_avre == fp_avre(real, syn, cfg)
    assert rep.fp_kt == fp_kt(real, syn, cfg)
    assert rep.trip_error == trip_error(real, syn, cfg)
    assert rep.length_error == length_error(real, syn, cfg)
    assert rep.top_n_proportions == top_n_proportions(real, syn, cfg)
    assert set(rep.to_dict()) >= set(rep.SCALARS)


def test_eval_config_validation(grid23):
    for kw in ({"sanity_fraction": 0}, {"top_k": 0}, {"pattern_len_min": 1},
               {"pattern_len_min": 5, "pattern_len_max": 4}):
        with pytest.raises(ValueError):
            EvalConfig(grid23, **kw)


def test_empty_synthetic_scores_maximal_divergence(grid23):
    report = evaluate(trajs(grid23, [[0, 1], [2]]), [], eval_cfg(grid23))
    assert report.trip_error == report.length_error == 1.0
    assert report.location_avre == 0.5  # three visited cells at RE 1, three idle at 0
    assert report.fp_avre == 1.0
