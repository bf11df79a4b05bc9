"""Contrast minimisation over the orthogonal group O(s).

The objective for a whitened stack ``Y`` and ``W in O(s)`` is
``sum_l F(X_l)`` with ``X_l = sum_k W_kl Y_k``; ``F`` is minus the absolute
kurtosis or the free entropy (negentropy for the scalar kinds). Euclidean
gradients are exact; descent is Riemannian gradient descent with a QR
retraction and Armijo backtracking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datagen import random_orthogonal, stream
from .exceptions import DegenerateSpectrumError, DimensionError
from .free_stats import (
    COLLISION_RTOL,
    inverse_gap_sum,
    log_gap_sum,
)
from .stack import MatrixStack, ObjectiveKind, as_stack

__all__ = [
    "OptimizerConfig",
    "OptimizerTrace",
    "component_statistic",
    "objective_value",
    "euclidean_gradient",
    "tangent_projection",
    "retract",
    "riemannian_step",
    "optimize",
]

ARMIJO_C = 1e-4
MIN_STEP = 1e-14
MAX_STEP_FACTOR = 100.0
STEP_GROWTH = 2.0


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 1000
    grad_tol: float = 1e-8
    initial_step: float = 1.0
    restarts: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be > 0")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be > 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass
class OptimizerTrace:
    iterations: int = 0
    objective_history: list = field(default_factory=list)
    final_grad_norm: float = float("nan")
    converged: bool = False
    restart: int = 0
    restart_objectives: list = field(default_factory=list)


# -- per-component contrasts ------------------------------------------------
#
# Each returns (F(X), D) where D is the Euclidean gradient of F w.r.t. X in
# the real inner product <D, E> = Re sum(conj(D) * E), or D = None when
# ``grad`` is false.


def _sa_kurtosis(X, grad):
    N = X.shape[0]
    X2 = X @ X
    m2 = np.trace(X2).real / N
    kappa = np.vdot(X2, X2).real / N - 2.0 * m2**2
    D = None
    if grad:
        D = -np.sign(kappa) * (4.0 / N * (X2 @ X) - 8.0 * m2 / N * X)
    return -abs(kappa), D


def _rect_kurtosis(X, grad):
    N, M = X.shape
    XXh = X @ X.conj().T
    m1 = np.vdot(X, X).real / N
    kappa = np.vdot(XXh, XXh).real / N - (1.0 + N / M) * m1**2
    D = None
    if grad:
        D = -np.sign(kappa) * (4.0 / N * (XXh @ X) - 4.0 * (1.0 + N / M) * m1 / N * X)
    return -abs(kappa), D


def _hermitian(X):
    return (X + X.conj().T) / 2 if np.iscomplexobj(X) else X


def _sa_entropy(X, grad):
    N = X.shape[0]
    if N < 2:
        raise DimensionError("free entropy needs N >= 2")
    H = _hermitian(X)
    if not grad:
        lam = np.linalg.eigvalsh(H)
        return log_gap_sum(lam) / (N * (N - 1)), None
    lam, V = np.linalg.eigh(H)
    value = log_gap_sum(lam) / (N * (N - 1))
    c = 2.0 * inverse_gap_sum(lam) / (N * (N - 1))
    D = (V * c) @ V.conj().T
    return value, D


def _rect_entropy_spectrum(lam, N, M):
    small = lam < COLLISION_RTOL
    if small.any():
        raise DegenerateSpectrumError(
            f"X X^H has a zero eigenvalue ({lam[small][0]!r}); free entropy is -inf"
        )
    alpha, beta = N / (N + M), M / (N + M)
    pair = alpha**2 * log_gap_sum(lam) / (N * (N - 1)) if N > 1 else 0.0
    return pair + (beta - alpha) * alpha * np.log(lam).sum() / N


def _rect_entropy(X, grad):
    if X.shape[0] > X.shape[1]:
        value, D = _rect_entropy(X.conj().T, grad)
        return value, None if D is None else D.conj().T
    N, M = X.shape
    G = _hermitian(X @ X.conj().T)
    if not grad:
        return _rect_entropy_spectrum(np.linalg.eigvalsh(G), N, M), None
    lam, V = np.linalg.eigh(G)
    value = _rect_entropy_spectrum(lam, N, M)
    alpha, beta = N / (N + M), M / (N + M)
    c = (beta - alpha) * alpha / (N * lam)
    if N > 1:
        c = c + alpha**2 * 2.0 * inverse_gap_sum(lam) / (N * (N - 1))
    D = 2.0 * ((V * c) @ V.conj().T) @ X
    return value, D


def _scalar_kurtosis_raw(x, grad):
    T = x.size
    x2 = x * x
    m2 = x2.mean()
    c4 = (x2 * x2).mean() - 3.0 * m2**2
    D = None
    if grad:
        D = 4.0 / T * (x2 * x) - 12.0 * m2 / T * x
    return c4, D


def _scalar_kurtosis(X, grad):
    x = _real_samples(X)
    c4, D = _scalar_kurtosis_raw(x, grad)
    if grad:
        D = (-np.sign(c4) * D).reshape(X.shape)
    return -abs(c4), D


def _scalar_negentropy(X, grad):
    x = _real_samples(X)
    T = x.size
    m3 = np.mean(x**3)
    c4, Dc4 = _scalar_kurtosis_raw(x, grad)
    value = m3**2 / 12.0 + c4**2 / 48.0
    D = None
    if grad:
        D = -(m3 / (2.0 * T) * x * x + c4 / 24.0 * Dc4).reshape(X.shape)
    return -value, D


def _real_samples(X):
    if np.iscomplexobj(X):
        raise DimensionError("scalar contrasts need real-valued components")
    return X.ravel()


_CONTRASTS = {
    ObjectiveKind.SA_KURTOSIS: _sa_kurtosis,
    ObjectiveKind.SA_ENTROPY: _sa_entropy,
    ObjectiveKind.RECT_KURTOSIS: _rect_kurtosis,
    ObjectiveKind.RECT_ENTROPY: _rect_entropy,
    ObjectiveKind.SCALAR_KURTOSIS: _scalar_kurtosis,
    ObjectiveKind.SCALAR_NEGENTROPY: _scalar_negentropy,
}

def component_statistic(kind, X):
    """Contrast value ``F(X)`` of a single component (lower is "less Gaussian")."""
    kind = ObjectiveKind.parse(kind)
    return float(_CONTRASTS[kind](np.asarray(X), False)[0])


# -- objective over O(s) ----------------------------------------------------


def _stack_data(kind, Y):
    Y = as_stack(Y)
    if kind.is_self_adjoint and Y.rows != Y.cols:
        raise DimensionError("self-adjoint objectives need square components")
    return Y.data


def _components(W, data):
    return np.tensordot(W.T, data, axes=(1, 0))


class _Problem:
    """Objective evaluation for one whitened stack.

    Line-search trial points only need values, which for the entropy kinds
    take eigenvalues alone; gradients (eigenvectors too) are computed only
    at accepted points.
    """

    def __init__(self, kind, data):
        self.kind = kind
        self.data = data

    def value(self, W):
        return _evaluate(self.kind, W, self.data, False)[0]

    def value_and_gradient(self, W):
        return _evaluate(self.kind, W, self.data, True)


def _evaluate(kind, W, data, grad):
    contrast = _CONTRASTS[kind]
    X = _components(W, data)
    total = 0.0
    Ds = []
    for X_l in X:
        value, D = contrast(X_l, grad)
        total += value
        Ds.append(D)
    if not grad:
        return float(total), None
    D = np.stack(Ds)
    # G_kl = Re <D_l, Y_k>
    G = np.einsum("lnm,knm->kl", D.conj(), data).real
    return float(total), G


def _check_W(W, s):
    W = np.asarray(W, dtype=float)
    if W.shape != (s, s):
        raise DimensionError(f"W must be {s}x{s}, got {W.shape}")
    return W


def objective_value(kind, W, Y):
    """``sum_l F(X_l)`` with ``X = (W kron I)^T Y``; lower is better."""
    kind = ObjectiveKind.parse(kind)
    data = _stack_data(kind, Y)
    W = _check_W(W, data.shape[0])
    return _evaluate(kind, W, data, False)[0]


def euclidean_gradient(kind, W, Y):
    """Matrix of partial derivatives ``d objective / d W_kl``."""
    kind = ObjectiveKind.parse(kind)
    data = _stack_data(kind, Y)
    W = _check_W(W, data.shape[0])
    return _evaluate(kind, W, data, True)[1]


# -- manifold primitives ----------------------------------------------------


def _sym(B):
    return (B + B.T) / 2


def tangent_projection(W, G):
    """Project an ambient matrix onto the tangent space of O(s) at ``W``."""
    return G - W @ _sym(W.T @ G)


def retract(M):
    """QR retraction: the Q factor of ``M`` with a positive R diagonal."""
    Q, R = np.linalg.qr(M)
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d


def riemannian_step(W, G, step):
    """Retraction of ``W - step * P_W(G)``."""
    W = np.asarray(W, dtype=float)
    return retract(W - step * tangent_projection(W, np.asarray(G, dtype=float)))


def _descend(problem, W, cfg):
    eps = np.finfo(float).eps
    f, G = problem.value_and_gradient(W)
    P = tangent_projection(W, G)
    gnorm = float(np.linalg.norm(P))
    history = [f]
    trial = cfg.initial_step
    converged = False
    iterations = 0
    for _ in range(cfg.max_iters):
        if gnorm < cfg.grad_tol:
            converged = True
            break
        t = trial
        accepted = None
        while t >= MIN_STEP:
            W_new = retract(W - t * P)
            try:
                f_new = problem.value(W_new)
                if f_new <= f - ARMIJO_C * t * gnorm**2:
                    accepted = (W_new, *problem.value_and_gradient(W_new))
                    break
            except DegenerateSpectrumError:
                t /= 2
                continue
            # descent no longer resolvable at machine precision
            if t * gnorm**2 <= 64 * eps * max(1.0, abs(f)):
                break
            t /= 2
        if accepted is None:
            break
        W_new, f_new, G_new = accepted
        P_new = tangent_projection(W_new, G_new)
        # Barzilai-Borwein trial step for the next iteration, allowed to at
        # most double the accepted one so that iterates pressed against a
        # degenerate spectrum do not re-run long backtracking chains
        sdir = W_new - W
        ydir = P_new - P
        sy = abs(float(np.vdot(sdir, ydir)))
        trial = float(np.vdot(sdir, sdir)) / sy if sy > 0 else cfg.initial_step
        trial = min(trial, STEP_GROWTH * t, MAX_STEP_FACTOR * cfg.initial_step)
        trial = max(trial, MIN_STEP)
        W, f, P = W_new, f_new, P_new
        gnorm = float(np.linalg.norm(P))
        history.append(f)
        iterations += 1
    else:
        converged = gnorm < cfg.grad_tol
    trace = OptimizerTrace(
        iterations=iterations,
        objective_history=history,
        final_grad_norm=gnorm,
        converged=converged,
    )
    return W, f, trace


def optimize(kind, Y, cfg=None):
    """Minimise the contrast over O(s) with multi-start Riemannian descent.

    Restart 0 starts at the identity; restart ``r > 0`` starts at a Haar
    orthogonal matrix drawn from the stream ``(cfg.rng_seed, r)``. The best
    final objective wins, ties going to the lowest restart index.

    Returns
    -------
    W : ndarray, shape (s, s)
    trace : OptimizerTrace
        Trace of the winning restart.
    """
    kind = ObjectiveKind.parse(kind)
    cfg = cfg or OptimizerConfig()
    data = _stack_data(kind, Y)
    problem = _Problem(kind, data)
    s = data.shape[0]
    best = None
    finals = []
    for r in range(cfg.restarts):
        W0 = np.eye(s) if r == 0 else random_orthogonal(s, stream(cfg.rng_seed, r))
        try:
            W, f, trace = _descend(problem, W0, cfg)
        except DegenerateSpectrumError:
            if r == cfg.restarts - 1 and best is None:
                raise
            finals.append(float("nan"))
            continue
        finals.append(f)
        trace.restart = r
        if best is None or f < best[1]:
            best = (W, f, trace)
    W, _, trace = best
    trace.restart_objectives = finals
    return W, trace


def stack_components(W, Y) -> MatrixStack:
    """Return ``(W kron I)^T Y`` as a stack."""
    Y = as_stack(Y)
    return Y.combine(np.asarray(W).T)
