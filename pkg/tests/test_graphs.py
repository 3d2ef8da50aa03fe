import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssrgr import graphs
from ssrgr.errors import DegenerateGraphError, InvalidConfigError, InvalidLabelsError
from ssrgr.graphs import GraphConfig

from oracles import brute_knn, iterate_propagation


def line(*xs):
    return np.array([xs], dtype=float)


def random_instance(seed, n=None, labeled_frac=0.5):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(6, 21))
    X = rng.standard_normal((3, n))
    c = int(rng.integers(2, 4))
    labels = rng.integers(0, c, n)
    labels[rng.random(n) > labeled_frac] = -1
    # every class keeps at least one labeled member
    labels[:c] = np.arange(c)
    k = int(rng.integers(1, min(5, n - 1) + 1))
    cfg = GraphConfig(num_neighbors=k, beta_w=float(rng.uniform(0, 1)),
                      beta_b=float(rng.uniform(0, 1)))
    return X, labels, cfg


# -- affinity ----------------------------------------------------------------

def test_line_points_nearest_neighbor():
    A = graphs.knn_affinity(line(0, 1, 10), num_neighbors=1).weights
    assert A[0, 1] == A[1, 0] == 1
    assert A[1, 2] == A[2, 1] == 1
    assert A[0, 2] == 0


def test_two_points():
    A = graphs.knn_affinity(line(0, 3), num_neighbors=1).weights
    np.testing.assert_array_equal(A, [[0, 1], [1, 0]])


def test_ties_go_to_lower_index():
    # point 1 is equidistant from 0 and 2
    rel = graphs.knn_relation(graphs.pairwise_sq_distances(line(0, 1, 2)), 1)
    assert rel[1, 0] and not rel[1, 2]


@pytest.mark.parametrize("n,k", [(1, 1), (3, 3), (3, 0)])
def test_bad_neighbor_counts(n, k):
    with pytest.raises(InvalidConfigError):
        graphs.knn_affinity(np.zeros((2, n)) + np.arange(n), num_neighbors=k)


def test_affinity_requires_one_source():
    with pytest.raises(InvalidConfigError):
        graphs.knn_affinity()


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 15), k=st.integers(1, 6))
def test_affinity_matches_brute_force(seed, n, k):
    k = min(k, n - 1)
    X = np.random.default_rng(seed).standard_normal((2, n))
    g = graphs.knn_affinity(X, num_neighbors=k)
    np.testing.assert_array_equal(g.knn, brute_knn(X, k))
    A = g.weights
    np.testing.assert_array_equal(A, A.T)
    assert set(np.unique(A)) <= {0.0, 1.0}
    assert np.all(np.diag(A) == 0)
    assert np.all(A.sum(axis=1) >= k)


# -- within / between ----------------------------------------------------------

def _pair_graph(labels, n_total=None):
    """Two adjacent points (0, 1) plus optional isolated filler points."""
    n = n_total or len(labels)
    A = np.zeros((n, n))
    A[0, 1] = A[1, 0] = 1
    knn = A.astype(bool)
    return graphs.AffinityGraph(A, knn)


def test_within_labeled_same_class():
    g = _pair_graph([0, 0])
    Aw = graphs.within_class_affinity(g, np.array([0, 0]), GraphConfig(beta_w=0.5))
    assert Aw[0, 1] == pytest.approx(1.0)


def test_within_unlabeled_pair():
    g = _pair_graph([-1, -1], n_total=3)
    Aw = graphs.within_class_affinity(g, np.array([-1, -1, 0]), GraphConfig(beta_w=0.5))
    assert Aw[0, 1] == pytest.approx(0.5)


def test_within_degenerates_to_supervised():
    X, labels, cfg = random_instance(3, labeled_frac=2.0)
    assert np.all(labels >= 0)
    g = graphs.knn_affinity(X, num_neighbors=cfg.num_neighbors)
    Aw = graphs.within_class_affinity(g, labels, GraphConfig(beta_w=0.0))
    counts = np.bincount(labels)
    expected = np.where(labels[:, None] == labels[None, :],
                        g.weights / counts[labels][:, None], 0.0)
    np.testing.assert_array_equal(Aw, expected)


def test_between_same_class_neighbors():
    g = _pair_graph([0, 0], n_total=4)
    labels = np.array([0, 0, 1, 1])
    Ab = graphs.between_class_affinity(g, labels, GraphConfig(beta_b=0.1))
    assert Ab[0, 1] == pytest.approx(0.25 - 0.5 - 0.1)


def test_between_different_class_neighbors():
    g = _pair_graph([0, 1], n_total=4)
    labels = np.array([0, 1, 0, 1])
    Ab = graphs.between_class_affinity(g, labels, GraphConfig(beta_b=0.1))
    assert Ab[0, 1] == pytest.approx(0.25)


def test_between_non_neighbors_zero():
    g = _pair_graph([0, 1], n_total=4)
    labels = np.array([0, 1, 0, 1])
    Ab = graphs.between_class_affinity(g, labels, GraphConfig(beta_b=0.0))
    assert Ab[0, 3] == 0.0 and Ab[2, 3] == 0.0


def test_class_without_labeled_member():
    g = _pair_graph([0, 2], n_total=3)
    with pytest.raises(InvalidLabelsError):
        graphs.within_class_affinity(g, np.array([0, 2, -1]), GraphConfig())


def test_bad_label_values():
    g = _pair_graph([0, 0])
    with pytest.raises(InvalidLabelsError):
        graphs.between_class_affinity(g, np.array([0, -3]), GraphConfig())
    with pytest.raises(InvalidLabelsError):
        graphs.strong_similarity(g, np.array([0]))


# -- strong similarity -----------------------------------------------------------

def test_strong_no_labels():
    X = np.random.default_rng(0).standard_normal((2, 6))
    g = graphs.knn_affinity(X, num_neighbors=2)
    assert not graphs.strong_similarity(g, -np.ones(6, int)).any()


def test_strong_pairs():
    g = graphs.knn_affinity(line(0, 1, 10, 11), num_neighbors=1)
    G = graphs.strong_similarity(g, np.array([0, 0, 0, 1]))
    assert G[0, 1] == G[1, 0] == 1
    # 0 and 2 share a class but are not neighbors
    assert G[0, 2] == 0
    # 2 and 3 are neighbors from different classes
    assert G[2, 3] == 0


# -- propagation ---------------------------------------------------------------

def test_two_node_propagation():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    cfg = GraphConfig(propagation_mixing=0.5, delta=0.0)
    P = graphs.propagate_similarity(A, np.zeros((2, 2)), cfg)
    # frozen from the fixed-point iteration oracle
    ref = iterate_propagation(A, np.zeros((2, 2)), 0.5, steps=200)
    np.testing.assert_allclose(ref, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], atol=1e-10)
    np.testing.assert_allclose(P, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], atol=1e-12)


def test_single_node_is_degenerate():
    with pytest.raises(DegenerateGraphError, match="node 0"):
        graphs.propagate_similarity(np.zeros((1, 1)), np.zeros((1, 1)), GraphConfig())


def test_isolated_node_named():
    A = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], float)
    with pytest.raises(DegenerateGraphError, match="node 2"):
        graphs.propagate_similarity(A, np.zeros((3, 3)), GraphConfig())


@pytest.mark.parametrize("m", [0.0, 1.0, -0.1])
def test_mixing_range(m):
    with pytest.raises(InvalidConfigError):
        graphs.propagate_similarity(np.ones((2, 2)) - np.eye(2), np.zeros((2, 2)),
                                    GraphConfig(propagation_mixing=m))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), mixing=st.floats(0.05, 0.95))
def test_closed_form_matches_iteration(seed, mixing):
    X, labels, cfg = random_instance(seed)
    g = graphs.knn_affinity(X, num_neighbors=cfg.num_neighbors)
    G = graphs.strong_similarity(g, labels)
    P = graphs.propagate_similarity(g, G, GraphConfig(propagation_mixing=mixing, delta=0.0))
    ref = iterate_propagation(g.weights, G, mixing, steps=1000)
    np.testing.assert_allclose(P, 0.5 * (ref + ref.T), atol=1e-8, rtol=0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), delta=st.floats(0, 0.5))
def test_threshold_idempotent(seed, delta):
    P = np.random.default_rng(seed).random((7, 7))
    once = graphs.threshold_symmetrize(P, delta)
    np.testing.assert_array_equal(graphs.threshold_symmetrize(once, delta), once)
    np.testing.assert_array_equal(once, once.T)
    assert np.all((once == 0) | (once >= delta))


# -- Laplacians ----------------------------------------------------------------

def test_laplacian_small():
    np.testing.assert_array_equal(graphs.laplacian([[0, 1], [1, 0]]), [[1, -1], [-1, 1]])
    np.testing.assert_array_equal(graphs.laplacian(np.zeros((3, 3))), np.zeros((3, 3)))


def test_combined_reductions():
    gs = graphs.build_graphs(graphs.pairwise_sq_distances(random_instance(1)[0]),
                             random_instance(1)[1], random_instance(1)[2])
    np.testing.assert_array_equal(gs.combined(0, 0, 0), np.zeros_like(gs.lap_global))
    np.testing.assert_array_equal(gs.combined(1, 0, 0), gs.lap_global)


def test_combined_rejects_bad_input():
    L = np.zeros((2, 2))
    with pytest.raises(InvalidConfigError):
        graphs.combined_laplacian(L, L, np.zeros((3, 3)), 1, 1, 1)
    with pytest.raises(InvalidConfigError):
        graphs.combined_laplacian(L, L, L, 1, -1, 1)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_graph_invariants(seed):
    X, labels, cfg = random_instance(seed)
    gs = graphs.build_graphs(graphs.pairwise_sq_distances(X), labels, cfg)
    n = X.shape[1]
    for W in (gs.within, gs.between, gs.similarity):
        np.testing.assert_array_equal(W, W.T)
    assert np.all(gs.within >= 0) and np.all(gs.similarity >= 0)
    ones = np.ones(n)
    L = gs.combined(1.0, 1.0, 0.1)
    for lap in (gs.lap_within, gs.lap_between, gs.lap_global, L):
        assert np.max(np.abs(lap @ ones)) <= 1e-10 * n
    rng = np.random.default_rng(seed)
    for lap in (gs.lap_within, gs.lap_global):
        xs = rng.standard_normal((n, 100))
        quad = np.einsum("ij,ik,kj->j", xs, lap, xs)
        assert np.all(quad >= -1e-10 * np.sum(xs ** 2, axis=0))


def test_config_validation():
    with pytest.raises(InvalidConfigError):
        GraphConfig(num_neighbors=5).validate(5)
    with pytest.raises(InvalidConfigError):
        GraphConfig(beta_w=-1).validate()
    with pytest.raises(InvalidConfigError):
        GraphConfig(delta=-1).validate()
