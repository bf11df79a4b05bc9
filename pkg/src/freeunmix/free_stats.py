"""Empirical free and classical statistics of single matrices and samples.

The free statistics are the finite-``N`` plug-in estimators of the free
kurtosis (fourth free cumulant) and Voiculescu's free entropy, for both
self-adjoint ``N x N`` matrices and rectangular ``N x M`` matrices. The
classical ones (kurtosis and a cumulant-based negentropy approximation)
serve the ICA baseline.
"""

import numpy as np

from .exceptions import DegenerateSpectrumError, DimensionError

#: Relative tolerance under which two eigenvalues count as colliding.
COLLISION_RTOL = 1e-12

__all__ = [
    "COLLISION_RTOL",
    "free_kurtosis_sa",
    "free_entropy_sa",
    "free_kurtosis_rect",
    "free_entropy_rect",
    "classical_kurtosis",
    "negentropy_approx",
    "log_gap_sum",
    "inverse_gap_sum",
]


def _square(X):
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {X.shape}")
    return X


def _matrix(X):
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or 0 in X.shape:
        raise DimensionError(f"expected a non-empty 2-D matrix, got shape {X.shape}")
    return X


def _gaps(lam):
    """Pairwise differences ``lam_i - lam_j`` with the collision check applied."""
    diff = lam[:, None] - lam[None, :]
    tol = COLLISION_RTOL * np.maximum(1.0, np.abs(lam)[:, None] + np.abs(lam)[None, :])
    off = ~np.eye(lam.size, dtype=bool)
    bad = off & (np.abs(diff) < tol)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DegenerateSpectrumError(
            f"eigenvalues {i} and {j} collide ({lam[i]!r} vs {lam[j]!r}); "
            "free entropy is -inf"
        )
    return diff


def log_gap_sum(lam):
    """Return ``sum_{i != j} log|lam_i - lam_j|`` (raises on collisions)."""
    lam = np.asarray(lam, dtype=float)
    if lam.size < 2:
        return 0.0
    diff = _gaps(lam)
    np.fill_diagonal(diff, 1.0)
    return float(np.log(np.abs(diff)).sum())


def inverse_gap_sum(lam):
    """Return the vector ``g_i = sum_{j != i} 1 / (lam_i - lam_j)``."""
    lam = np.asarray(lam, dtype=float)
    if lam.size < 2:
        return np.zeros_like(lam)
    diff = _gaps(lam)
    np.fill_diagonal(diff, np.inf)
    return (1.0 / diff).sum(axis=1)


def _hermitian_eigvals(X):
    if np.iscomplexobj(X):
        X = (X + X.conj().T) / 2
    return np.linalg.eigvalsh(X)


def free_kurtosis_sa(X):
    """Empirical free kurtosis of a self-adjoint matrix.

    ``Tr(X^4)/N - 2 (Tr(X^2)/N)^2``. The input is assumed Hermitian; the
    result is real even for complex input.
    """
    X = _square(X)
    N = X.shape[0]
    X2 = X @ X
    m2 = np.trace(X2).real / N
    # Tr(X^4) = ||X^2||_F^2 for Hermitian X
    m4 = np.vdot(X2, X2).real / N
    return float(m4 - 2.0 * m2**2)


def free_entropy_sa(X):
    """Empirical free entropy ``sum_{i!=j} log|l_i - l_j| / (N(N-1))``.

    Raises
    ------
    DimensionError
        If ``X`` is not square or ``N < 2``.
    DegenerateSpectrumError
        If two eigenvalues collide within ``COLLISION_RTOL``.
    """
    X = _square(X)
    N = X.shape[0]
    if N < 2:
        raise DimensionError("free entropy needs N >= 2")
    lam = _hermitian_eigvals(X)
    return log_gap_sum(lam) / (N * (N - 1))


def free_kurtosis_rect(X):
    """Empirical rectangular free kurtosis of an ``N x M`` matrix.

    ``Tr((X X^H)^2)/N - (1 + N/M) (Tr(X X^H)/N)^2``.
    """
    X = _matrix(X)
    N, M = X.shape
    XXh = X @ X.conj().T
    m1 = np.vdot(X, X).real / N
    m2 = np.vdot(XXh, XXh).real / N
    return float(m2 - (1.0 + N / M) * m1**2)


def _rect_weights(N, M):
    alpha = N / (N + M)
    beta = M / (N + M)
    return alpha, beta


def rect_eigvals(X):
    """Eigenvalues of ``X X^H`` with the positivity check applied."""
    X = _matrix(X)
    lam = np.linalg.eigvalsh(X @ X.conj().T)
    small = lam < COLLISION_RTOL
    if small.any():
        raise DegenerateSpectrumError(
            f"X X^H has a zero eigenvalue ({lam[small][0]!r}); free entropy is -inf"
        )
    return lam


def free_entropy_rect(X):
    """Empirical rectangular free entropy of an ``N x M`` matrix.

    With ``alpha = N/(N+M)``, ``beta = M/(N+M)`` and ``l_i`` the eigenvalues
    of ``X X^H``::

        alpha^2 sum_{i!=j} log|l_i - l_j| / (N(N-1))
            + (beta - alpha) alpha sum_i log(l_i) / N

    The pair term is taken as 0 when ``N == 1``. Tall matrices (``N > M``)
    are evaluated through ``X^H``, whose Gram matrix has no structural zero
    eigenvalues.
    """
    X = _matrix(X)
    if X.shape[0] > X.shape[1]:
        X = X.conj().T
    N, M = X.shape
    alpha, beta = _rect_weights(N, M)
    lam = rect_eigvals(X)
    pair = alpha**2 * log_gap_sum(lam) / (N * (N - 1)) if N > 1 else 0.0
    return float(pair + (beta - alpha) * alpha * np.log(lam).sum() / N)


def _sample(x):
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2:
        raise DimensionError("sample statistics need at least 2 samples")
    return x


def classical_kurtosis(x):
    """Empirical kurtosis ``mean(x^4) - 3 mean(x^2)^2`` (no centering)."""
    x = _sample(x)
    x2 = x * x
    return float(np.mean(x2 * x2) - 3.0 * np.mean(x2) ** 2)


def negentropy_approx(x):
    """Cumulant approximation of negentropy, ``m3^2/12 + c4^2/48``.

    ``x`` should already be centred and whitened; this is not checked.
    """
    x = _sample(x)
    m3 = np.mean(x**3)
    c4 = classical_kurtosis(x)
    return float(m3**2 / 12.0 + c4**2 / 48.0)
