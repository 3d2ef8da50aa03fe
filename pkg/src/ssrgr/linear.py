"""Linear semi-supervised sparse representation with graph regularization.

Variables: dictionary ``D`` (d x k), codes ``S`` (k x n), classifier ``W``
(c x k) and predicted labels ``H`` (c x n). The fit alternates a joint
``[D; sqrt(a) W]`` update, an ADMM code update and a closed-form ``H``
update, all against the same fixed combined graph Laplacian.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from . import graphs
from .data import normalize_columns
from .errors import IndefiniteLaplacianError, InvalidConfigError, InvalidLabelsError
from .graphs import GraphConfig
from .sparse_solvers import (AdmmConfig, AdmmState, admm_quadratic_l1,
                             lagrange_dual_dictionary, lasso_admm)

log = logging.getLogger(__name__)

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class HyperParams:
    lam: float = 1.2
    alpha: float = 0.2
    label_consistency_weight: float = 0.06
    beta1: float = 1.0
    beta2: float = 1.0
    beta3: float = 0.1
    ridge_mu: float = 1.0
    dict_size: int = None
    outer_iters: int = 15
    stop_tol: float = 1e-6
    normalize: bool = True
    init_iters: int = 5
    init_admm_iters: int = 100
    code_admm_iters: int = 1000
    graph: GraphConfig = field(default_factory=GraphConfig)
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    seed: int = 0

    @classmethod
    def linear_defaults(cls, **kw):
        return cls(**kw)

    @classmethod
    def kernel_defaults(cls, **kw):
        kw = {"lam": 0.003, "alpha": 0.07, "label_consistency_weight": 0.0003, **kw}
        return cls(**kw)

    @property
    def gamma(self):
        return self.label_consistency_weight

    def with_betas(self, beta1, beta2, beta3):
        return replace(self, beta1=beta1, beta2=beta2, beta3=beta3)

    def admm_config(self, max_iters=None, tol=None):
        cfg = replace(self.admm, lam=self.lam)
        if max_iters is not None:
            cfg = replace(cfg, max_iters=max_iters)
        if tol is not None:
            cfg = replace(cfg, tol=tol)
        return cfg

    def validate(self):
        weights = dict(lam=self.lam, alpha=self.alpha, gamma=self.gamma,
                       beta1=self.beta1, beta2=self.beta2, beta3=self.beta3,
                       ridge_mu=self.ridge_mu)
        bad = [k for k, v in weights.items() if v < 0]
        if bad:
            raise InvalidConfigError(f"weights must be >= 0: {', '.join(bad)}")
        if self.alpha == 0:
            raise InvalidConfigError("alpha must be > 0 (the classifier is recovered by 1/sqrt(alpha))")
        if self.ridge_mu == 0:
            raise InvalidConfigError("ridge_mu must be > 0")
        if self.dict_size is not None and self.dict_size < 1:
            raise InvalidConfigError("dict_size must be >= 1")
        if self.outer_iters < 0:
            raise InvalidConfigError("outer_iters must be >= 0")
        self.admm_config().validate()


@dataclass(frozen=True)
class LabelConstraint:
    """One-hot targets ``F`` (c x n) and the labeled indicator ``u`` (diag of U)."""
    F: np.ndarray
    u: np.ndarray

    @classmethod
    def from_labels(cls, labels, class_count=None):
        labels = np.asarray(labels, dtype=int)
        labeled = labels >= 0
        if not labeled.any():
            raise InvalidLabelsError("at least one labeled sample is required")
        c = int(labels.max()) + 1 if class_count is None else class_count
        present = np.unique(labels[labeled])
        missing = sorted(set(range(c)) - set(present.tolist()))
        if missing:
            raise InvalidLabelsError(
                f"classes {[m + 1 for m in missing]} have no labeled samples")
        F = np.zeros((c, labels.size))
        F[labels[labeled], np.flatnonzero(labeled)] = 1.0
        return cls(F, labeled.astype(float))

    @property
    def num_classes(self):
        return self.F.shape[0]


@dataclass(frozen=True)
class SsrgrModel:
    dictionary: np.ndarray
    codes: np.ndarray
    classifier: np.ndarray
    labels_pred: np.ndarray
    trace: tuple = ()
    features: np.ndarray = None

    def transductive(self):
        return predict_transductive(self.labels_pred)


def predict_transductive(H):
    """Column-wise argmax; ties go to the lowest class index."""
    H = np.asarray(H, dtype=float)
    if H.shape[1] == 0:
        return np.zeros(0, dtype=int)
    return np.argmax(H, axis=0)


# -- label update ------------------------------------------------------------

class LabelSystem:
    """Factorization of ``alpha I + (L + L^T)/2 + gamma U`` reused across
    H updates."""

    def __init__(self, L, u, alpha, gamma):
        L = np.asarray(L, dtype=float)
        M = alpha * np.eye(L.shape[0]) + 0.5 * (L + L.T) + gamma * np.diag(u)
        ev = np.linalg.eigvalsh(M) if M.size else np.ones(1)
        if ev[0] <= 0 or ev[-1] / ev[0] > MAX_CONDITION:
            raise IndefiniteLaplacianError(
                f"label system is singular or indefinite (eigenvalues in "
                f"[{ev[0]:.3g}, {ev[-1]:.3g}]); reduce beta3 or increase alpha")
        self.alpha = alpha
        self.gamma = gamma
        self.u = np.asarray(u, dtype=float)
        self.matrix = M
        self._factor = linalg.cho_factor(M)

    def solve(self, WS, F):
        rhs = self.alpha * WS + self.gamma * F * self.u
        return linalg.cho_solve(self._factor, rhs.T).T


def update_labels(W, S, L, lc, alpha, gamma):
    """H = (a W S + g F U)(a I + (L + L^T)/2 + g U)^-1."""
    return LabelSystem(L, lc.u, alpha, gamma).solve(W @ S, lc.F)


def label_objective(H, W, S, L, lc, alpha, gamma):
    R = H - W @ S
    E = H - lc.F
    return float(alpha * np.sum(R * R) + np.sum(H * (H @ L.T))
                 + gamma * np.sum(E * E * lc.u))


# -- objective -----------------------------------------------------------------

def objective_terms(X, D, S, W, H, L, lc, lam, alpha, gamma):
    fid = float(np.sum((X - D @ S) ** 2))
    return fid + lam * float(np.abs(S).sum()) + label_objective(H, W, S, L, lc, alpha, gamma)


def objective(model, X, L, lc, hp):
    """Unified objective for the current model, with the combined Laplacian."""
    return objective_terms(X, model.dictionary, model.codes, model.classifier,
                           model.labels_pred, L, lc, hp.lam, hp.alpha, hp.gamma)


# -- fitting -------------------------------------------------------------------

def preprocess(X, hp):
    X = np.asarray(X, dtype=float)
    return normalize_columns(X) if hp.normalize else X


def resolve_dict_size(hp, n, c):
    return hp.dict_size if hp.dict_size is not None else min(n, 15 * c)


def pick_atoms(rng, n, k):
    """Indices of training columns seeding the dictionary (with replacement
    only when k > n)."""
    return rng.choice(n, size=k, replace=k > n)


def random_labels(rng, lc):
    H = rng.uniform(0.0, 1.0, size=lc.F.shape)
    labeled = lc.u > 0
    H[:, labeled] = lc.F[:, labeled]
    return H


def ridge_classifier(H, S, alpha, mu):
    """argmin_W alpha |H - W S|^2 + mu |W|^2."""
    k = S.shape[0]
    A = alpha * (S @ S.T) + mu * np.eye(k)
    return linalg.solve(A, alpha * (S @ H.T), assume_a="pos").T


@dataclass
class FitState:
    model: SsrgrModel
    admm: AdmmState


def initialize(X, lc, hp, rng=None):
    """Dictionary learning on X alone, then ridge-regression classifier and
    random unlabeled columns of H. ``X`` is used as given (preprocess first)."""
    hp.validate()
    rng = np.random.default_rng(hp.seed) if rng is None else rng
    n = X.shape[1]
    k = resolve_dict_size(hp, n, lc.num_classes)
    idx = pick_atoms(rng, n, k)
    D = X[:, idx] / np.maximum(np.linalg.norm(X[:, idx], axis=0), 1.0)
    cfg = hp.admm_config(max_iters=hp.init_admm_iters)
    state = AdmmState.zeros(k, n)
    for _ in range(hp.init_iters):
        state = lasso_admm(X, D, cfg, state)
        D = lagrange_dual_dictionary(X, state.codes, 1.0, previous=D)
    state = lasso_admm(X, D, cfg, state)
    S = state.codes
    H = random_labels(rng, lc)
    W = ridge_classifier(H, S, hp.alpha, hp.ridge_mu)
    return FitState(SsrgrModel(D, S, W, H, (), X), state)


def update_dictionary_classifier(X, S, H, D, W, alpha):
    """Joint update of D and W through the stacked problem
    ``|[X; sqrt(a) H] - [D; sqrt(a) W] S|^2`` with column bound ``1 + alpha``."""
    if alpha <= 0:
        raise InvalidConfigError("alpha must be > 0 to split the stacked dictionary")
    d = X.shape[0]
    ra = np.sqrt(alpha)
    Xt = np.vstack([X, ra * H])
    prev = np.vstack([D, ra * W])
    Dt = lagrange_dual_dictionary(Xt, S, 1.0 + alpha, previous=prev)
    old = np.sum((Xt - prev @ S) ** 2)
    new = np.sum((Xt - Dt @ S) ** 2)
    if new > old and np.all(np.sum(prev ** 2, axis=0) <= 1.0 + alpha):
        Dt = prev
    return Dt[:d], Dt[d:] / ra


def code_system(X, D, W, H, alpha):
    """(Q, R) of the code subproblem ``|X~ - D~ S|^2`` in quadratic form."""
    Q = D.T @ D + alpha * (W.T @ W)
    R = D.T @ X + alpha * (W.T @ H)
    return Q, R


def build_laplacian(X, labels, hp):
    gs = graphs.build_graphs(graphs.pairwise_sq_distances(X), labels, hp.graph)
    return gs, gs.combined(hp.beta1, hp.beta2, hp.beta3)


def fit(X, labels, hp, laplacian=None):
    """Fit on all columns of X; ``labels`` holds class ids ``0..c-1`` for
    labeled columns and ``-1`` elsewhere.

    Returns a :class:`SsrgrModel` whose ``trace`` lists the objective after
    each executed outer iteration.
    """
    hp.validate()
    X = preprocess(X, hp)
    labels = np.asarray(labels, dtype=int)
    lc = LabelConstraint.from_labels(labels)
    if laplacian is None:
        _, laplacian = build_laplacian(X, labels, hp)
    fs = initialize(X, lc, hp)
    m = fs.model
    if hp.outer_iters == 0:
        return m
    system = LabelSystem(laplacian, lc.u, hp.alpha, hp.gamma)
    D, S, W, H = m.dictionary, m.codes, m.classifier, m.labels_pred
    state = fs.admm
    cfg = hp.admm_config()
    trace = []
    for it in range(hp.outer_iters):
        D, W = update_dictionary_classifier(X, S, H, D, W, hp.alpha)
        Q, R = code_system(X, D, W, H, hp.alpha)
        state = admm_quadratic_l1(Q, R, cfg, state)
        S = state.codes
        H = system.solve(W @ S, lc.F)
        f = objective_terms(X, D, S, W, H, laplacian, lc, hp.lam, hp.alpha, hp.gamma)
        log.debug("iter %d objective %.10g", it + 1, f)
        trace.append(f)
        if len(trace) > 1 and abs(trace[-2] - f) <= hp.stop_tol * max(abs(trace[-2]), 1e-300):
            break
    return SsrgrModel(D, S, W, H, tuple(trace), X)


def encode(model, x, hp, max_iters=None, tol=1e-10):
    """Sparse codes of new columns against the learned dictionary."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != model.dictionary.shape[0]:
        raise InvalidConfigError(
            f"sample dimension {x.shape[0]} does not match model dimension "
            f"{model.dictionary.shape[0]}")
    if hp.normalize:
        x = normalize_columns(x)
    cfg = hp.admm_config(max_iters=max_iters or hp.code_admm_iters, tol=tol)
    return lasso_admm(x, model.dictionary, cfg).codes


def class_scores(model, x, hp):
    return model.classifier @ encode(model, x, hp)


def predict_inductive(model, x_new, hp):
    """Class id of a new sample: code it, then argmax of ``W s``."""
    scores = class_scores(model, x_new, hp)
    return int(predict_transductive(scores)[0]) if np.ndim(x_new) == 1 else predict_transductive(scores)
