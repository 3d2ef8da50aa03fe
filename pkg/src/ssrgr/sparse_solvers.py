"""Sparse coding and constrained dictionary solvers.

Both the linear and the kernel problems reduce to the same two kernels:

* an l1-regularized quadratic in the codes ``S``,
  ``Tr(S^T Q S) - 2 Tr(S^T R) + lam * |S|_1``, solved by ADMM;
* a least-squares fit under per-column squared-norm bounds, solved through
  its Lagrange dual over one multiplier per column.
"""
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .errors import InvalidConfigError, InvalidKernelError, NumericInputError


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 1.0
    lam: float = 1.2
    max_iters: int = 1
    tol: float = 0.0

    def validate(self):
        if self.rho <= 0:
            raise InvalidConfigError("ADMM rho must be > 0")
        if self.lam < 0:
            raise InvalidConfigError("l1 weight must be >= 0")
        if self.max_iters < 0:
            raise InvalidConfigError("ADMM max_iters must be >= 0")
        if self.tol < 0:
            raise InvalidConfigError("ADMM tol must be >= 0")


@dataclass
class AdmmState:
    """Warm-startable ADMM iterate: quadratic-step variable S, sparse split
    variable Z and dual y.

    ``codes`` is what callers should treat as the sparse codes. It is the
    shrinkage of ``S + y/rho`` taken after the last dual step, i.e. the ``Z``
    the next cycle would open with, so it already reflects the most recent
    quadratic solve. It is exactly sparse and equals ``S`` and ``Z`` at
    convergence.
    """
    S: np.ndarray
    Z: np.ndarray
    y: np.ndarray
    iters: int = 0
    codes: np.ndarray = None

    def __post_init__(self):
        if self.codes is None:
            self.codes = self.Z.copy()

    @classmethod
    def zeros(cls, k, n):
        return cls(np.zeros((k, n)), np.zeros((k, n)), np.zeros((k, n)))

    @classmethod
    def from_codes(cls, S):
        S = np.array(S, dtype=float)
        return cls(S.copy(), S.copy(), np.zeros_like(S))

    def copy(self):
        return AdmmState(self.S.copy(), self.Z.copy(), self.y.copy(), self.iters,
                         self.codes.copy())



def _finite(*arrays, what="input"):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericInputError(f"non-finite values in {what}")


def soft_threshold(x, t):
    """sgn(x) * max(|x| - t, 0), elementwise."""
    if np.any(np.asarray(t) < 0):
        raise InvalidConfigError("threshold must be >= 0")
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - t, 0.0)
    return out if out.ndim else float(out)


def quadratic_l1_objective(S, Q, R, lam, const=0.0):
    """``const + Tr(S^T Q S) - 2 Tr(S^T R) + lam |S|_1``."""
    return float(const + np.sum(S * (Q @ S)) - 2.0 * np.sum(S * R) + lam * np.abs(S).sum())


def admm_quadratic_l1(Q, R, cfg, state=None, callback=None):
    """ADMM on ``Tr(S^T Q S) - 2 Tr(S^T R) + lam |S|_1`` with ``S = Z`` split.

    One cycle is
        Z <- T_{lam/rho}(S + y/rho)
        S <- (2Q + rho I)^-1 (2R + rho Z - y)
        y <- y + rho (S - Z)
    Stops after ``cfg.max_iters`` cycles, or earlier once both the primal
    residual ``|S - Z|`` and the dual residual ``rho |Z - Z_prev|`` drop to
    ``cfg.tol`` (max-abs), when ``tol > 0``.
    """
    cfg.validate()
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    _finite(Q, R, what="ADMM system")
    k, n = R.shape
    state = AdmmState.zeros(k, n) if state is None else state.copy()
    if cfg.max_iters == 0 or n == 0:
        return state
    factor = linalg.cho_factor(2.0 * Q + cfg.rho * np.eye(k))
    rhs0 = 2.0 * R
    S, Z, y = state.S, state.Z, state.y
    thresh = cfg.lam / cfg.rho
    for it in range(cfg.max_iters):
        Z_prev = Z
        Z = soft_threshold(S + y / cfg.rho, thresh)
        S = linalg.cho_solve(factor, rhs0 + cfg.rho * Z - y)
        y = y + cfg.rho * (S - Z)
        state.iters += 1
        if callback is not None:
            callback(S)
        if cfg.tol > 0:
            primal = np.max(np.abs(S - Z))
            dual = cfg.rho * np.max(np.abs(Z - Z_prev))
            if primal <= cfg.tol and dual <= cfg.tol:
                break
    state.S, state.Z, state.y = S, Z, y
    state.codes = soft_threshold(S + y / cfg.rho, thresh)
    return state


def lasso_objective(X, D, S, lam):
    return float(np.sum((X - D @ S) ** 2) + lam * np.abs(S).sum())


def lasso_admm(X, D, cfg, state=None):
    """Codes minimizing ``|X - D S|_F^2 + lam |S|_1`` (note: no 1/2 factor).

    Returns the final :class:`AdmmState`; its ``codes`` are the code matrix.
    """
    X = np.asarray(X, dtype=float)
    D = np.asarray(D, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    _finite(X, D, what="lasso data/dictionary")
    if X.shape[0] != D.shape[0]:
        raise InvalidConfigError(
            f"data dimension {X.shape[0]} does not match dictionary dimension {D.shape[0]}")
    return admm_quadratic_l1(D.T @ D, D.T @ X, cfg, state)


def kernel_lasso_admm(K, B, W, H, alpha, cfg, state=None):
    """Codes for ``Tr((I-BS)^T K (I-BS)) + lam|S|_1 + alpha |H - W S|^2``."""
    K = np.asarray(K, dtype=float)
    B = np.asarray(B, dtype=float)
    W = np.asarray(W, dtype=float)
    H = np.asarray(H, dtype=float)
    _finite(K, B, W, H, what="kernel ADMM input")
    KB = K @ B
    Q = B.T @ KB + alpha * (W.T @ W)
    R = KB.T + alpha * (W.T @ H)
    return admm_quadratic_l1(Q, R, cfg, state)


def kernel_sparse_objective(K, B, S, W, H, alpha, lam):
    E = np.eye(K.shape[0]) - B @ S
    return float(np.sum(E * (K @ E)) + lam * np.abs(S).sum()
                 + alpha * np.sum((H - W @ S) ** 2))


# -- constrained least squares through the Lagrange dual ---------------------

def _dual_terms(C, Phi, lam):
    """Q = (C + diag(lam))^-1, dual objective and its derivatives.

    The (minimization form of the) dual is
    ``phi(lam) = Tr(Q Phi) + bound * sum(lam)``; the caller adds the bound
    term. ``C = S S^T`` and ``Phi`` is the Gram of the cross term.
    """
    M = C + np.diag(lam)
    try:
        cf = linalg.cho_factor(M)
    except linalg.LinAlgError:
        return None
    Q = linalg.cho_solve(cf, np.eye(M.shape[0]))
    Q = 0.5 * (Q + Q.T)
    QPQ = Q @ Phi @ Q
    return Q, float(np.sum(Q * Phi)), np.diag(QPQ).copy(), QPQ


def solve_column_dual(C, Phi, bound, max_iters=200, tol=1e-12):
    """Multipliers lam >= 0 maximizing the Lagrange dual of a column-bounded
    least-squares fit.

    Projected Newton from zeros with an Armijo line search. ``C`` must be
    positive definite once any positive multiplier is added; a diagonal
    jitter is used only when ``C`` itself is singular at lam = 0.

    Returns ``(lam, Q)`` where the primal solution is ``cross @ Q``.
    """
    k = C.shape[0]
    lam = np.zeros(k)
    scale = max(float(np.trace(C)) / max(k, 1), 1.0)
    ev, V = np.linalg.eigh(C)
    floor = 0.0
    proj = None
    # A numerically singular C factors "successfully" into a useless inverse.
    # Phi and the primal map vanish on null(C) in exact arithmetic, so
    # project the roundoff away before the jittered inverse amplifies it.
    if ev[0] <= 1e-10 * max(ev[-1], 1e-300):
        floor = 1e-9 * scale
        lam = np.full(k, floor)
        rng_vecs = V[:, ev > 1e-10 * max(ev[-1], 1e-300)]
        proj = rng_vecs @ rng_vecs.T
        Phi = proj @ Phi @ proj
    terms = _dual_terms(C, Phi, lam)
    if terms is None:
        raise NumericInputError("code Gram matrix is not positive semidefinite")

    def value(t, lam):
        return t[1] + bound * lam.sum()

    for _ in range(max_iters):
        Q, _, norms, QPQ = terms
        grad = bound - norms
        # binding set: multipliers pinned at zero whose gradient pushes outward
        eps = min(1e-8, np.linalg.norm(np.minimum(lam - floor, grad)))
        active = (lam <= floor + eps) & (grad > 0)
        free = ~active
        if np.max(np.abs(np.minimum(lam - floor, grad))) <= tol * max(bound, 1.0):
            break
        step = np.zeros(k)
        if free.any():
            Hf = 2.0 * (QPQ * Q)[np.ix_(free, free)]
            try:
                step[free] = -linalg.solve(Hf + 1e-14 * np.eye(free.sum()) * np.trace(Hf),
                                           grad[free], assume_a="pos")
            except (linalg.LinAlgError, ValueError):
                step[free] = -grad[free]
        if not np.any(step):
            break
        f0 = value(terms, lam)
        t = 1.0
        accepted = False
        while t > 1e-20:
            cand = np.maximum(lam + t * step, floor)
            ct = _dual_terms(C, Phi, cand)
            if ct is not None and value(ct, cand) <= f0 + 1e-4 * np.dot(grad, cand - lam):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        moved = np.max(np.abs(cand - lam))
        lam, terms = cand, ct
        if moved <= 1e-15 * max(1.0, np.max(lam)):
            break
    return lam, terms[0] if proj is None else proj @ terms[0]


def _project_columns(M, norms_sq, bound):
    over = norms_sq > bound
    if np.any(over):
        M = M.copy()
        M[:, over] *= np.sqrt(bound / norms_sq[over])
    return M


def _used_atoms(S):
    return np.linalg.norm(S, axis=1) > 0


def _rank_deficient(C):
    ev = np.linalg.eigvalsh(C)
    return ev[0] <= 1e-10 * max(ev[-1], 1e-300)


def _polish(D, C, cross, bound, metric=None, max_iters=20000, tol=1e-13):
    """Accelerated projected gradient on ``|data - D S|^2`` written as
    ``Tr(D^T G D C) - 2 Tr(D^T G cross)`` with ``G = metric`` (identity when
    None). Column scaling is the exact projection in that metric.

    Used after the dual when ``C`` is singular: the dual is then degenerate
    and its Lagrangian minimizer need not be the constrained optimum.
    """
    G = (lambda M: M) if metric is None else (lambda M: metric @ M)

    def norms(M):
        return np.sum(M * G(M), axis=0)

    def value(M):
        GM = G(M)
        return float(np.sum(GM * (M @ C)) - 2.0 * np.sum(GM * cross))

    step = 1.0 / (2.0 * np.linalg.eigvalsh(C)[-1])
    D = _project_columns(D, norms(D), bound)
    Y, t, f = D.copy(), 1.0, value(D)
    for _ in range(max_iters):
        cand = Y - step * 2.0 * (Y @ C - cross)
        new = _project_columns(cand, norms(cand), bound)
        f_new = value(new)
        if f_new > f:
            if t == 1.0:
                break  # a plain gradient step only rises by roundoff
            # restart momentum instead of accepting an uphill step
            Y, t = D.copy(), 1.0
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        Y = new + ((t - 1.0) / t_new) * (new - D)
        moved = np.max(np.abs(new - D))
        D, t, f = new, t_new, f_new
        if moved <= tol * max(1.0, np.max(np.abs(D))):
            break
    return D


def lagrange_dual_dictionary(X, S, bound=1.0, previous=None):
    """Dictionary minimizing ``|X - D S|_F^2`` s.t. ``|D_j|^2 <= bound``.

    Atoms whose code row is identically zero do not affect the fit; they
    keep their ``previous`` column (rescaled into the feasible set) or are
    set to zero.
    """
    X = np.asarray(X, dtype=float)
    S = np.asarray(S, dtype=float)
    _finite(X, S, what="dictionary update input")
    if bound <= 0:
        raise InvalidConfigError("norm bound must be > 0")
    m, k = X.shape[0], S.shape[0]
    D = np.zeros((m, k)) if previous is None else np.array(previous, dtype=float)
    if previous is not None:
        D = _project_columns(D, np.sum(D ** 2, axis=0), bound)
    used = _used_atoms(S)
    if not used.any():
        return D
    Su = S[used]
    C = Su @ Su.T
    XS = X @ Su.T
    lam, Q = solve_column_dual(C, XS.T @ XS, bound)
    Du = XS @ Q
    Du = _project_columns(Du, np.sum(Du ** 2, axis=0), bound)
    if _rank_deficient(C):
        Du = _polish(Du, C, XS, bound)
    D[:, used] = Du
    return D


def dictionary_objective(X, D, S):
    return float(np.sum((X - D @ S) ** 2))


def validate_gram(K, tol=1e-6):
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InvalidKernelError("kernel matrix must be square")
    _finite(K, what="kernel matrix")
    if not np.allclose(K, K.T, atol=1e-10, rtol=0):
        raise InvalidKernelError("kernel matrix is not symmetric")
    if K.shape[0]:
        ev = np.linalg.eigvalsh(0.5 * (K + K.T))
        if ev[0] < -tol:
            raise InvalidKernelError(
                f"kernel matrix is not positive semidefinite (min eigenvalue {ev[0]:.3g})")
    return K


def kernel_atom_norms(K, B):
    return np.sum(B * (K @ B), axis=0)


def kernel_dictionary_update(S, K, bound=1.0, previous=None, check=True):
    """Coefficients B = S^T (S S^T + Lambda)^-1 for the implicit dictionary
    ``phi(X) B`` under ``B_j^T K B_j <= bound``."""
    S = np.asarray(S, dtype=float)
    K = validate_gram(K) if check else np.asarray(K, dtype=float)
    _finite(S, what="codes")
    if bound <= 0:
        raise InvalidConfigError("norm bound must be > 0")
    n, k = K.shape[0], S.shape[0]
    B = np.zeros((n, k)) if previous is None else np.array(previous, dtype=float)
    if previous is not None:
        B = _project_columns(B, kernel_atom_norms(K, B), bound)
    used = _used_atoms(S)
    if not used.any():
        return B
    Su = S[used]
    C = Su @ Su.T
    Phi = Su @ K @ Su.T
    lam, Q = solve_column_dual(C, 0.5 * (Phi + Phi.T), bound)
    Bu = Su.T @ Q
    Bu = _project_columns(Bu, kernel_atom_norms(K, Bu), bound)
    if _rank_deficient(C):
        Bu = _polish(Bu, C, Su.T, bound, metric=K)
    B[:, used] = Bu
    return B


def kernel_fidelity(K, B, S):
    E = np.eye(K.shape[0]) - B @ S
    return float(np.sum(E * (K @ E)))


def with_lam(cfg, lam):
    return replace(cfg, lam=lam)
