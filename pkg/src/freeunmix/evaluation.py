"""Unmixing error metric and a singular-vector freeness diagnostic."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import DimensionError

__all__ = ["ErrorReport", "unmixing_error", "row_costs", "freeness_heuristic"]

EXHAUSTIVE_MAX = 8


@dataclass(frozen=True)
class ErrorReport:
    """Result of :func:`unmixing_error`.

    ``best_permutation[i]`` is the target row of row ``i`` of ``Ahat^-1 A``
    after scaling by ``best_scaling[i]``.
    """

    error: float
    best_permutation: np.ndarray
    best_scaling: np.ndarray

    def __float__(self):
        return self.error


def _nonsingular(A, name):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise np.linalg.LinAlgError(f"{name} has non-finite entries")
    if np.linalg.matrix_rank(A) < A.shape[0]:
        raise np.linalg.LinAlgError(f"{name} is singular")
    return A


def row_costs(A, Ahat):
    """Cost of sending row ``i`` of ``Ahat^-1 A`` to unit vector ``e_j``.

    ``min_d ||d r_i - e_j||^2 = 1 - r_ij^2 / ||r_i||^2``, attained at
    ``d = r_ij / ||r_i||^2``. Returns ``(costs, scalings, R)``.
    """
    A = _nonsingular(A, "A")
    Ahat = _nonsingular(Ahat, "Ahat")
    if A.shape != Ahat.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {Ahat.shape}")
    R = np.linalg.solve(Ahat, A)
    norms = np.einsum("ij,ij->i", R, R)
    costs = 1.0 - R**2 / norms[:, None]
    scalings = R / norms[:, None]
    return np.clip(costs, 0.0, None), scalings, R


def unmixing_error(A, Ahat, method="auto") -> ErrorReport:
    """Scaling- and permutation-invariant unmixing error.

    ``min over diagonal D, permutation P of ||P D Ahat^-1 A - I||_F``.
    The minimisation over ``D`` is closed form per row, so the problem
    reduces to a linear assignment on :func:`row_costs`; it is solved by
    enumeration (``method="exhaustive"``) or the Hungarian algorithm
    (``method="assignment"``). ``"auto"`` enumerates for ``s <= 8``.
    """
    costs, scalings, _ = row_costs(A, Ahat)
    s = costs.shape[0]
    if method == "auto":
        method = "exhaustive" if s <= EXHAUSTIVE_MAX else "assignment"
    if method == "exhaustive":
        rows = np.arange(s)
        best_total, best_perm = np.inf, None
        for perm in itertools.permutations(range(s)):
            total = costs[rows, perm].sum()
            if total < best_total:
                best_total, best_perm = total, np.array(perm)
    elif method == "assignment":
        _, best_perm = linear_sum_assignment(costs)
        best_total = costs[np.arange(s), best_perm].sum()
    else:
        raise ValueError(f"unknown method {method!r}")
    d = scalings[np.arange(s), best_perm]
    return ErrorReport(float(np.sqrt(max(best_total, 0.0))), best_perm, d)


def freeness_heuristic(X1, X2):
    """Normalised squared overlaps between the singular vectors of two matrices.

    Returns ``left = N |U1^H U2|^2`` and ``right = M |V1^H V2|^2`` from full
    SVDs. For independent, isotropically random singular vectors every entry
    is of order 1; every row averages exactly 1.
    """
    X1 = np.asarray(X1)
    X2 = np.asarray(X2)
    if X1.ndim != 2 or X1.shape != X2.shape:
        raise DimensionError(f"shapes differ: {X1.shape} vs {X2.shape}")
    N, M = X1.shape
    U1, _, V1h = np.linalg.svd(X1, full_matrices=True)
    U2, _, V2h = np.linalg.svd(X2, full_matrices=True)
    left = N * np.abs(U1.conj().T @ U2) ** 2
    right = M * np.abs(V1h.conj() @ V2h.T) ** 2
    return left, right
