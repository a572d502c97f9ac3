import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from swarmdiff.config import ArenaConfig, ConfigError, FeatureConfig
from swarmdiff.features import (
    AGENT_DIM,
    bounds_table,
    extract,
    feature_names,
    graph_stats,
    hull_area,
    normalize,
    proximity_graph,
    raw_alharthi,
    raw_gharbi,
    raw_yang,
    subsample_agents,
)
from swarmdiff.sim import Trajectory, simulate

BOUNDED = ArenaConfig(500.0, "bounded")
TORUS = ArenaConfig(500.0, "unbounded")
CFG = FeatureConfig()


def static_trajectory(points, headings, setting="40b", steps=1):
    pos = np.repeat(np.asarray(points, dtype=float)[None], steps, axis=0)
    hd = np.repeat(np.asarray(headings, dtype=float)[None], steps, axis=0)
    return Trajectory("ballistic", setting, 0, 0, 2.0, 500.0, pos, hd)


def test_proximity_graph_triangle():
    g = proximity_graph(np.array([[0, 0], [10, 0], [0, 10]]), 50, BOUNDED)
    assert g.n_edges == 3
    stats = graph_stats(g.adjacency()[None])
    assert stats.beta_index[0] == 1.0


def test_proximity_graph_isolated():
    pts = np.array([[0, 0], [100, 0], [0, 100], [300, 300]])
    g = proximity_graph(pts, 50, BOUNDED)
    assert g.n_edges == 0
    assert graph_stats(g.adjacency()[None]).subgroup_count[0] == 4


def test_proximity_graph_inclusive_radius():
    g = proximity_graph(np.array([[0, 0], [3, 4]]), 5.0, BOUNDED)
    assert g.n_edges == 1


@pytest.mark.parametrize("arena", [BOUNDED, TORUS])
def test_proximity_graph_matches_brute_force(arena):
    rng = np.random.default_rng(1)
    for _ in range(20):
        pts = rng.uniform(0, 500, size=(5, 2))
        g = proximity_graph(pts, 200, arena)
        expected = oracles.edges(pts.tolist(), 200, 500 if arena.periodic else None)
        assert [tuple(e) for e in g.edges.tolist()] == expected


def test_torus_edges_wrap():
    g = proximity_graph(np.array([[1.0, 250.0], [499.0, 250.0]]), 5.0, TORUS)
    assert g.n_edges == 1
    assert proximity_graph(np.array([[1.0, 250.0], [499.0, 250.0]]), 5.0, BOUNDED).n_edges == 0


@pytest.mark.parametrize("arena", [BOUNDED, TORUS])
def test_graph_features_match_oracle(arena):
    rng = np.random.default_rng(7)
    side = 500 if arena.periodic else None
    for _ in range(30):
        pts = rng.uniform(0, 200, size=(10, 2))
        adj = proximity_graph(pts, 50, arena).adjacency()
        s = graph_stats(adj[None])
        o = oracles.graph_features(pts.tolist(), 50, side)
        assert s.beta_index[0] == o["beta_index"]
        assert s.subgroup_count[0] == o["subgroup_count"]
        assert s.grouping[0] == o["grouping"]
        assert s.stragglers[0] == o["stragglers"]
        assert s.largest_diameter[0] == o["longest_path"]


def test_longest_path_chain():
    pts = np.array([[0, 0], [40, 0], [80, 0], [120, 0], [400, 400]], dtype=float)
    s = graph_stats(proximity_graph(pts, 50, BOUNDED).adjacency()[None])
    assert s.largest_diameter[0] == 3
    assert s.stragglers[0] == 1


def test_order_aligned_and_opposed():
    pts = [[10, 10], [100, 100], [300, 200]]
    raw = raw_yang(np.array([pts], dtype=float), np.array([[0.7, 0.7, 0.7]]), BOUNDED, 2.0, CFG)
    assert raw[0, 4] == pytest.approx(1.0)
    raw = raw_yang(np.array([[[10, 10], [100, 100]]], dtype=float), np.array([[0.0, np.pi]]), BOUNDED, 2.0, CFG)
    assert raw[0, 4] == pytest.approx(0.0, abs=1e-12)


def test_average_nn_distance_hand_value():
    pts = np.array([[[0, 0], [3, 4], [100, 100]]], dtype=float)
    raw = raw_alharthi(pts, np.zeros((1, 3)), BOUNDED, 2.0, CFG)
    expected = (5 + 5 + math.hypot(97, 96)) / 3
    assert raw[0, 6] == pytest.approx(expected)
    assert expected == pytest.approx(48.82, abs=0.01)
    assert np.mean(oracles.nn_distances(pts[0].tolist())) == pytest.approx(raw[0, 6])


def test_gharbi_sorted_nn():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 500, size=(1, 12, 2))
    raw = raw_gharbi(pts, np.zeros((1, 12)), TORUS, 2.0, CFG)
    assert raw[0].tolist() == pytest.approx(sorted(oracles.nn_distances(pts[0].tolist(), 500)))


def test_gomes_single_agent_normalised():
    tr = static_trajectory([[250, 250]], [0.0])
    fs = extract(tr, "gomes2013", transient=0)
    assert fs.values[0].tolist() == pytest.approx([0.5, 0.5, 1.0, 0.5])


def test_nn_features_reject_single_agent():
    tr = static_trajectory([[250, 250]], [0.0])
    with pytest.raises(ConfigError):
        extract(tr, "gharbi2023", transient=0)


def test_hull_area_and_degenerate():
    assert hull_area(np.array([[0, 0], [10, 0], [10, 10], [0, 10]], dtype=float)) == pytest.approx(100)
    assert hull_area(np.array([[0, 0], [5, 5], [10, 10]], dtype=float)) == pytest.approx(100)  # bbox


def test_flock_density_uses_epsilon():
    pts = np.array([[[0, 0], [10, 0], [10, 10], [0, 10]]], dtype=float)
    raw = raw_yang(pts, np.zeros((1, 4)), BOUNDED, 2.0, CFG)
    assert raw[0, 1] == pytest.approx(4 / 101)


def test_collision_count():
    pts = np.array([[[0, 0], [3, 0], [6, 0], [200, 200]]], dtype=float)
    raw = raw_yang(pts, np.zeros((1, 4)), BOUNDED, 2.0, CFG)
    assert raw[0, 0] == 2  # (0,1) and (1,2); (0,2) is 6 px apart


def test_swarm_mode_index_cluster():
    pts = np.array([[[10, 10], [12, 12], [11, 14], [490, 490]]], dtype=float)
    raw = raw_alharthi(pts, np.zeros((1, 4)), BOUNDED, 2.0, CFG)
    assert raw[0, 2] == 0.75


def test_normalize_examples():
    b = {"a": (2.0, 4.0)}
    assert normalize([[2.0]], ["a"], b)[0, 0] == 0.0
    assert normalize([[4.0]], ["a"], b)[0, 0] == 1.0
    assert normalize([[9.0]], ["a"], b)[0, 0] == 1.0
    with pytest.raises(ConfigError):
        normalize([[1.0]], ["missing"], b)


@pytest.mark.parametrize("fs", ["alharthi2022", "yang2023", "gomes2013", "gharbi2023"])
def test_bounds_cover_names(fs):
    assert set(feature_names(fs, 30)) <= set(bounds_table(fs, 30, 500, 2))


def test_subsample_identity_and_errors():
    tr = simulate("ballistic", "30b", 0, 0, total_steps=260)
    same, idx = subsample_agents(tr, 30, 5)
    assert same is tr and idx == list(range(30))
    with pytest.raises(ConfigError):
        subsample_agents(tr, 31, 5)


def test_subsample_fixed_subset():
    tr = simulate("ballistic", "40b", 0, 0, total_steps=260)
    sub, idx = subsample_agents(tr, 30, 9)
    again, idx2 = subsample_agents(tr, 30, 9)
    assert idx == idx2 and idx == sorted(idx) and len(set(idx)) == 30
    assert np.array_equal(sub.positions, tr.positions[:, idx])


@pytest.mark.parametrize("fs,dim", [("alharthi2022", 8), ("yang2023", 6), ("gomes2013", 120), ("gharbi2023", 30)])
def test_extract_dimensions_on_40_agents(fs, dim):
    tr = simulate("reynolds", "40u", 0, 0, total_steps=300)
    series = extract(tr, fs, transient=250)
    assert series.values.shape == (50, dim)
    assert series.steps[0] == 250
    assert series.agent_dim == AGENT_DIM.get(fs)
    assert (series.subsample is not None) == (fs in AGENT_DIM)
    assert series.values.min() >= 0 and series.values.max() <= 1


def test_subsample_shared_across_behaviours():
    a = extract(simulate("reynolds", "40b", 3, 1, total_steps=260), "gomes2013")
    b = extract(simulate("dispersion", "40b", 3, 1, total_steps=260), "gomes2013")
    assert a.subsample == b.subsample


@settings(max_examples=40, deadline=None)
@given(
    pts=arrays(np.float64, (3, 10, 2), elements=st.floats(0, 499)),
    hd=arrays(np.float64, (3, 10), elements=st.floats(0, 6.28)),
    perm_seed=st.integers(0, 2**16),
    periodic=st.booleans(),
)
def test_swarm_features_permutation_invariant(pts, hd, perm_seed, periodic):
    arena = TORUS if periodic else BOUNDED
    perm = np.random.default_rng(perm_seed).permutation(10)
    for raw in (raw_alharthi, raw_yang, raw_gharbi):
        a = raw(pts, hd, arena, 2.0, CFG)
        b = raw(pts[:, perm], hd[:, perm], arena, 2.0, CFG)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-9)


def test_max_swarm_shift_ballistic_aligned():
    pos = np.zeros((8, 3, 2))
    for t in range(8):
        pos[t] = [[100 + 2 * t, 100], [200 + 2 * t, 150], [300 + 2 * t, 300]]
    raw = raw_alharthi(pos, np.zeros((8, 3)), BOUNDED, 2.0, CFG)
    assert raw[0, 0] == 0.0
    assert raw[1:, 0] == pytest.approx(2.0)
