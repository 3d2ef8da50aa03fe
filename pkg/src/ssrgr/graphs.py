"""kNN affinity, the three label-aware graphs and their Laplacians.

Labels are integer arrays of length n with classes ``0..c-1`` and ``-1``
marking an unlabeled point. All matrices are dense.
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DegenerateGraphError, InvalidConfigError, InvalidLabelsError

UNLABELED = -1


@dataclass(frozen=True)
class GraphConfig:
    num_neighbors: int = 5
    beta_w: float = 0.2
    beta_b: float = 0.2
    propagation_mixing: float = 0.5
    delta: float = 1e-4

    def validate(self, n=None):
        if self.num_neighbors < 1:
            raise InvalidConfigError("num_neighbors must be >= 1")
        if n is not None and self.num_neighbors >= n:
            raise InvalidConfigError(
                f"num_neighbors={self.num_neighbors} must be < number of points ({n})")
        if self.beta_w < 0 or self.beta_b < 0:
            raise InvalidConfigError("beta_w and beta_b must be >= 0")
        if not 0.0 < self.propagation_mixing < 1.0:
            raise InvalidConfigError("propagation_mixing must lie strictly inside (0, 1)")
        if self.delta < 0:
            raise InvalidConfigError("delta must be >= 0")


@dataclass(frozen=True)
class AffinityGraph:
    """Symmetric 0/1 kNN affinity.

    ``knn[i, j]`` is True when point j is among the nearest neighbors of
    point i (the directed relation the OR-rule symmetrizes).
    """
    weights: np.ndarray
    knn: np.ndarray

    @property
    def num_points(self):
        return self.weights.shape[0]


@dataclass(frozen=True)
class GraphSet:
    """Every graph built from one metric plus its Laplacians."""
    affinity: AffinityGraph
    within: np.ndarray
    between: np.ndarray
    strong: np.ndarray
    similarity: np.ndarray
    lap_within: np.ndarray
    lap_between: np.ndarray
    lap_global: np.ndarray

    def combined(self, beta1, beta2, beta3):
        return combined_laplacian(self.lap_global, self.lap_within, self.lap_between,
                                  beta1, beta2, beta3)


def pairwise_sq_distances(points):
    """Squared Euclidean distances between the columns of a d x n matrix."""
    X = np.asarray(points, dtype=float)
    return cdist(X.T, X.T, metric="sqeuclidean")


def knn_relation(distances, num_neighbors):
    """Directed kNN relation from an n x n distance matrix.

    Ties are broken by the lower point index (stable sort).
    """
    dist = np.array(distances, dtype=float)
    n = dist.shape[0]
    if dist.ndim != 2 or dist.shape[1] != n:
        raise InvalidConfigError("distance matrix must be square")
    if n < 2:
        raise InvalidConfigError("need at least two points to build a kNN graph")
    if not 1 <= num_neighbors < n:
        raise InvalidConfigError(
            f"num_neighbors={num_neighbors} must satisfy 1 <= k < n={n}")
    if not np.all(np.isfinite(dist)):
        raise InvalidConfigError("distances must be finite")
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")[:, :num_neighbors]
    rel = np.zeros((n, n), dtype=bool)
    rel[np.repeat(np.arange(n), num_neighbors), order.ravel()] = True
    return rel


def knn_affinity(points=None, num_neighbors=5, distances=None):
    """Binary affinity A with A_ij = 1 iff i is a kNN of j or j of i.

    Pass either ``points`` (d x n, Euclidean metric) or a precomputed
    ``distances`` matrix (any metric, e.g. kernel-induced).
    """
    if (points is None) == (distances is None):
        raise InvalidConfigError("pass exactly one of points or distances")
    if distances is None:
        distances = pairwise_sq_distances(points)
    rel = knn_relation(distances, num_neighbors)
    weights = (rel | rel.T).astype(float)
    return AffinityGraph(weights=weights, knn=rel)


def _check_labels(labels, n):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise InvalidLabelsError(f"expected {n} labels, got shape {labels.shape}")
    labels = labels.astype(int)
    if np.any(labels < UNLABELED):
        raise InvalidLabelsError("labels must be class ids >= 0 or -1 for unlabeled")
    return labels


def class_counts(labels):
    """Number of labeled points per class id ``0..max``."""
    lab = labels[labels >= 0]
    if lab.size == 0:
        return np.zeros(0, dtype=int)
    counts = np.bincount(lab)
    if np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise InvalidLabelsError(f"classes {missing} have no labeled members")
    return counts


def _pair_masks(labels):
    labeled = labels >= 0
    both = labeled[:, None] & labeled[None, :]
    same = both & (labels[:, None] == labels[None, :])
    return both, same


def within_class_affinity(graph, labels, cfg):
    """Within-class weights: labeled same-class pairs get A/n_y + beta_w*A,
    other neighbor pairs get beta_w*A."""
    A = graph.weights
    labels = _check_labels(labels, A.shape[0])
    counts = class_counts(labels)
    _, same = _pair_masks(labels)
    n_y = np.ones(A.shape[0])
    n_y[labels >= 0] = counts[labels[labels >= 0]]
    Aw = cfg.beta_w * A
    Aw = np.where(same, A / n_y[:, None] + cfg.beta_w * A, Aw)
    return Aw


def between_class_affinity(graph, labels, cfg):
    """Between-class weights.

    Pairs with both endpoints labeled are resolved by their labels
    (same class: A(1/n - 1/n_y) - beta_b*A, different class: A/n); pairs
    touching an unlabeled point get -beta_b*A.
    """
    A = graph.weights
    n = A.shape[0]
    labels = _check_labels(labels, n)
    counts = class_counts(labels)
    both, same = _pair_masks(labels)
    n_y = np.ones(n)
    n_y[labels >= 0] = counts[labels[labels >= 0]]
    Ab = -cfg.beta_b * A
    Ab = np.where(both & ~same, A / n, Ab)
    Ab = np.where(same, A * (1.0 / n - 1.0 / n_y[:, None]) - cfg.beta_b * A, Ab)
    return Ab


def strong_similarity(graph, labels):
    """G_ij = 1 when j is a kNN of i and both carry the same label."""
    labels = _check_labels(labels, graph.num_points)
    _, same = _pair_masks(labels)
    G = (graph.knn & same).astype(float)
    np.fill_diagonal(G, 0.0)
    return G


def threshold_symmetrize(P, delta):
    """Symmetrize and zero every entry below ``delta``."""
    P = 0.5 * (P + P.T)
    return np.where(P < delta, 0.0, P)


def propagate_similarity(affinity, strong, cfg):
    """Diffuse the strong similarities along the kNN random walk.

    Returns the thresholded symmetric limit of
    ``P <- (1-m) P0 + m T P`` with ``T = Deg^-1 A`` and ``P0 = G + I``.
    """
    A = affinity.weights if isinstance(affinity, AffinityGraph) else np.asarray(affinity, float)
    n = A.shape[0]
    if not 0.0 < cfg.propagation_mixing < 1.0:
        raise InvalidConfigError("propagation_mixing must lie strictly inside (0, 1)")
    deg = A.sum(axis=1)
    isolated = np.flatnonzero(deg <= 0)
    if isolated.size:
        raise DegenerateGraphError(
            f"node {int(isolated[0])} has no neighbors; transition matrix undefined "
            "(increase num_neighbors)")
    m = cfg.propagation_mixing
    T = A / deg[:, None]
    P0 = np.array(strong, dtype=float)
    np.fill_diagonal(P0, 1.0)
    P_star = (1.0 - m) * np.linalg.solve(np.eye(n) - m * T, P0)
    return threshold_symmetrize(P_star, cfg.delta)


def laplacian(weights):
    """Deg - W with Deg_ii = sum_j W_ij."""
    W = np.asarray(weights, dtype=float)
    return np.diag(W.sum(axis=1)) - W


def combined_laplacian(lap_global, lap_within, lap_between, beta1, beta2, beta3):
    if not (lap_global.shape == lap_within.shape == lap_between.shape):
        raise InvalidConfigError("Laplacian shapes differ")
    if min(beta1, beta2, beta3) < 0:
        raise InvalidConfigError("graph weights beta1..beta3 must be >= 0")
    return beta1 * lap_global + beta2 * lap_within - beta3 * lap_between


def build_graphs(distances, labels, cfg):
    """All graphs and Laplacians from a pairwise distance matrix."""
    n = np.asarray(distances).shape[0]
    cfg.validate(n)
    labels = _check_labels(labels, n)
    aff = knn_affinity(distances=distances, num_neighbors=cfg.num_neighbors)
    Aw = within_class_affinity(aff, labels, cfg)
    Ab = between_class_affinity(aff, labels, cfg)
    G = strong_similarity(aff, labels)
    P = propagate_similarity(aff, G, cfg)
    return GraphSet(affinity=aff, within=Aw, between=Ab, strong=G, similarity=P,
                    lap_within=laplacian(Aw), lap_between=laplacian(Ab),
                    lap_global=laplacian(P))
