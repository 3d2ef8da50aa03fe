"""Kernelized estimator.

The dictionary lives in feature space as ``phi(X) B`` so only the Gram
matrix ``K`` is ever needed. Graphs use the kernel-induced distance
``K_ii - 2 K_ij + K_jj``. The fit alternates B, S, W and H updates.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import graphs
from .errors import InvalidConfigError
from .linear import (LabelConstraint, LabelSystem, label_objective, pick_atoms,
                     predict_transductive, preprocess, random_labels,
                     resolve_dict_size, ridge_classifier)
from .sparse_solvers import (AdmmState, admm_quadratic_l1, dictionary_objective,
                             kernel_atom_norms, kernel_dictionary_update,
                             kernel_fidelity, kernel_lasso_admm,
                             lagrange_dual_dictionary, validate_gram)

log = logging.getLogger(__name__)

KINDS = ("gaussian", "linear", "precomputed")


@dataclass(frozen=True)
class KernelConfig:
    kind: str = "gaussian"
    sigma: float = None

    def validate(self):
        if self.kind not in KINDS:
            raise InvalidConfigError(f"kernel kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "gaussian" and self.sigma is not None:
            if not (np.isfinite(self.sigma) and self.sigma > 0):
                raise InvalidConfigError("gaussian sigma must be finite and > 0")


@dataclass(frozen=True)
class KernelModel:
    coeffs: np.ndarray
    codes: np.ndarray
    classifier: np.ndarray
    labels_pred: np.ndarray
    gram: np.ndarray
    trace: tuple = ()
    features: np.ndarray = None
    kind: str = "gaussian"
    sigma: float = None

    def transductive(self):
        return predict_transductive(self.labels_pred)


def median_sigma(X):
    """sigma with sigma^2 = median pairwise squared distance (i < j)."""
    sq = graphs.pairwise_sq_distances(X)
    iu = np.triu_indices(sq.shape[0], 1)
    med = float(np.median(sq[iu])) if iu[0].size else 1.0
    return np.sqrt(med) if med > 0 else 1.0


def gaussian_kernel(X, sigma, Y=None):
    """K_ij = exp(-|x_i - y_j|^2 / sigma^2) between columns."""
    if sigma is None or not sigma > 0:
        raise InvalidConfigError("gaussian sigma must be > 0")
    X = np.asarray(X, dtype=float)
    Y = X if Y is None else np.asarray(Y, dtype=float)
    K = np.exp(-cdist(X.T, Y.T, metric="sqeuclidean") / sigma ** 2)
    if Y is X:
        np.fill_diagonal(K, 1.0)
    return K


def linear_kernel(X, Y=None):
    X = np.asarray(X, dtype=float)
    Y = X if Y is None else np.asarray(Y, dtype=float)
    return X.T @ Y


def kernel_distance(K, i, j):
    return float(K[i, i] - 2.0 * K[i, j] + K[j, j])


def kernel_distances(K):
    d = np.diag(K)
    return d[:, None] - 2.0 * K + d[None, :]


def kernel_graphs(K, labels, cfg):
    return graphs.build_graphs(kernel_distances(K), labels, cfg)


def kernel_objective_terms(K, B, S, W, H, L, lc, lam, alpha, gamma):
    return (kernel_fidelity(K, B, S) + lam * float(np.abs(S).sum())
            + label_objective(H, W, S, L, lc, alpha, gamma))


def kernel_objective(model, L, lc, hp):
    return kernel_objective_terms(model.gram, model.coeffs, model.codes, model.classifier,
                                  model.labels_pred, L, lc, hp.lam, hp.alpha, hp.gamma)


def update_classifier(S, H, previous=None):
    """argmin_W |H - W S|^2 subject to |W_m|^2 <= 1."""
    W = lagrange_dual_dictionary(H, S, 1.0, previous=previous)
    if previous is not None and np.all(np.sum(previous ** 2, axis=0) <= 1.0):
        if dictionary_objective(H, W, S) > dictionary_objective(H, previous, S):
            return previous
    return W


def update_labels_kernel(W, S, L, lc, alpha, gamma):
    """H = (2aWS + 2gFU)(2aI + L + L^T + 2gU)^-1."""
    return LabelSystem(L, lc.u, alpha, gamma).solve(W @ S, lc.F)


def _update_coeffs(S, K, B):
    new = kernel_dictionary_update(S, K, 1.0, previous=B, check=False)
    if np.all(kernel_atom_norms(K, B) <= 1.0) and kernel_fidelity(K, new, S) > kernel_fidelity(K, B, S):
        return B
    return new


def build_gram(X, kcfg):
    """Gram matrix and the resolved sigma (None unless gaussian)."""
    kcfg.validate()
    if kcfg.kind == "precomputed":
        return validate_gram(X), None
    if kcfg.kind == "linear":
        return linear_kernel(X), None
    sigma = kcfg.sigma if kcfg.sigma is not None else median_sigma(X)
    return gaussian_kernel(X, sigma), sigma


def initialize_kernel(K, lc, hp, rng=None):
    """Kernel dictionary learning with the classifier term off, then the
    same ridge classifier and random label columns as the linear path."""
    rng = np.random.default_rng(hp.seed) if rng is None else rng
    n = K.shape[0]
    k = resolve_dict_size(hp, n, lc.num_classes)
    idx = pick_atoms(rng, n, k)
    B = np.zeros((n, k))
    B[idx, np.arange(k)] = 1.0 / np.maximum(np.sqrt(np.maximum(np.diag(K)[idx], 0.0)), 1.0)
    cfg = hp.admm_config(max_iters=hp.init_admm_iters)
    c = lc.num_classes
    W_off, H_off = np.zeros((c, k)), np.zeros((c, n))
    state = AdmmState.zeros(k, n)
    for _ in range(hp.init_iters):
        state = kernel_lasso_admm(K, B, W_off, H_off, 0.0, cfg, state)
        B = kernel_dictionary_update(state.codes, K, 1.0, previous=B, check=False)
    state = kernel_lasso_admm(K, B, W_off, H_off, 0.0, cfg, state)
    S = state.codes
    H = random_labels(rng, lc)
    W = ridge_classifier(H, S, hp.alpha, hp.ridge_mu)
    return B, S, W, H, state


def fit_kernel(X, labels, hp, kcfg=KernelConfig(), laplacian=None):
    """Fit on all columns of X (or on a precomputed Gram when
    ``kcfg.kind == "precomputed"``, in which case X is that Gram)."""
    hp.validate()
    labels = np.asarray(labels, dtype=int)
    lc = LabelConstraint.from_labels(labels)
    feats = None
    if kcfg.kind != "precomputed":
        feats = preprocess(X, hp)
        K, sigma = build_gram(feats, kcfg)
    else:
        K, sigma = build_gram(X, kcfg)
    if feats is not None:
        validate_gram(K, tol=1e-6)
    if laplacian is None:
        laplacian = kernel_graphs(K, labels, hp.graph).combined(hp.beta1, hp.beta2, hp.beta3)
    B, S, W, H, state = initialize_kernel(K, lc, hp)
    model = dict(gram=K, features=feats, kind=kcfg.kind, sigma=sigma)
    if hp.outer_iters == 0:
        return KernelModel(B, S, W, H, trace=(), **model)
    system = LabelSystem(laplacian, lc.u, hp.alpha, hp.gamma)
    cfg = hp.admm_config()
    trace = []
    for it in range(hp.outer_iters):
        B = _update_coeffs(S, K, B)
        state = kernel_lasso_admm(K, B, W, H, hp.alpha, cfg, state)
        S = state.codes
        W = update_classifier(S, H, previous=W)
        H = system.solve(W @ S, lc.F)
        f = kernel_objective_terms(K, B, S, W, H, laplacian, lc, hp.lam, hp.alpha, hp.gamma)
        log.debug("iter %d objective %.10g", it + 1, f)
        trace.append(f)
        if len(trace) > 1 and abs(trace[-2] - f) <= hp.stop_tol * max(abs(trace[-2]), 1e-300):
            break
    return KernelModel(B, S, W, H, trace=tuple(trace), **model)


def kernel_rows(model, x_new, hp):
    """Kernel values between training columns and new columns (n x m)."""
    if model.kind == "precomputed":
        raise InvalidConfigError("precomputed-kernel models need explicit kernel rows")
    x = np.asarray(x_new, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != model.features.shape[0]:
        raise InvalidConfigError(
            f"sample dimension {x.shape[0]} does not match model dimension "
            f"{model.features.shape[0]}")
    x = preprocess(x, hp)
    if model.kind == "linear":
        return linear_kernel(model.features, x)
    return gaussian_kernel(model.features, model.sigma, x)


def encode_kernel(model, rows, hp, max_iters=None, tol=1e-10):
    """Codes z minimizing ``k(x,x) - 2 k_x^T B z + z^T B^T K B z + lam |z|_1``."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    if rows.shape[0] != model.gram.shape[0]:
        raise InvalidConfigError(
            f"kernel rows have {rows.shape[0]} entries, model has {model.gram.shape[0]} training points")
    B = model.coeffs
    Q = B.T @ model.gram @ B
    cfg = hp.admm_config(max_iters=max_iters or hp.code_admm_iters, tol=tol)
    return admm_quadratic_l1(Q, B.T @ rows, cfg).codes


def class_scores_kernel(model, x_new, hp, rows=None):
    if rows is None:
        rows = kernel_rows(model, x_new, hp)
    return model.classifier @ encode_kernel(model, rows, hp)


def predict_inductive_kernel(model, x_new, hp, rows=None):
    scores = class_scores_kernel(model, x_new, hp, rows)
    single = rows is None and np.ndim(x_new) == 1 or rows is not None and np.ndim(rows) == 1
    pred = predict_transductive(scores)
    return int(pred[0]) if single else pred
