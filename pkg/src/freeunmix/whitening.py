"""Centering and whitening of matrix stacks.

Two flavours are provided: the matricial one used before free component
factorization (normalised traces, ``C_ij = Tr(Z_i Z_j^H) / N``) and the
vectorised one used by the ICA baseline (sample covariance over the ``N*M``
entries). In both cases the covariance eigendecomposition ``C = U S^2 U^T``
is sign-normalised so every column of ``U`` has a positive largest-magnitude
entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import RankError, SingularCovarianceError
from .stack import SELF_ADJOINT, MatrixStack, as_stack

#: Covariance eigenvalues below this fraction of the largest are treated as zero.
RANK_RTOL = 1e-10

__all__ = [
    "RANK_RTOL",
    "WhiteningResult",
    "center",
    "covariance",
    "whiten",
    "whiten_overdetermined",
    "whiten_vectorized",
    "vectorized_covariance",
]


@dataclass(frozen=True)
class WhiteningResult:
    """Output of a whitening pass.

    Attributes
    ----------
    whitened : MatrixStack
        The whitened stack ``Y``.
    eigvecs : ndarray, shape (p, s)
        Covariance eigenvectors ``U`` (square unless overdetermined).
    singvals : ndarray, shape (s,)
        Square roots ``S`` of the covariance eigenvalues, nonincreasing.
    means : ndarray, shape (p,)
        Scalar centering offsets (trace mean or entry mean per component).
    centered : MatrixStack
        The centered input ``Z - Zbar``.
    """

    whitened: MatrixStack
    eigvecs: np.ndarray
    singvals: np.ndarray
    means: np.ndarray
    centered: MatrixStack

    @property
    def whitening_matrix(self) -> np.ndarray:
        """Matrix mapping the centered stack to ``Y``."""
        U, S = self.eigvecs, self.singvals
        if U.shape[0] == U.shape[1]:
            return (U / S) @ U.T
        return (U / S).T

    @property
    def dewhitening_matrix(self) -> np.ndarray:
        """Matrix mapping ``Y`` back to the centered stack (``U S U^T``)."""
        U, S = self.eigvecs, self.singvals
        if U.shape[0] == U.shape[1]:
            return (U * S) @ U.T
        return U * S


def center(Z):
    """Remove the scalar mean of every component.

    Self-adjoint components lose ``(Tr Z_i / N) I``; rectangular ones lose
    their entry mean.

    Returns
    -------
    centered : MatrixStack
    offsets : ndarray, shape (s,)
        The removed scalar per component; the subtracted matrix is
        ``offset * I`` (self-adjoint) or ``offset * ones`` (rectangular).
    """
    Z = as_stack(Z)
    data = Z.data
    if Z.kind == SELF_ADJOINT:
        N = Z.rows
        offsets = np.trace(data, axis1=1, axis2=2) / N
        eye = np.eye(N)
        centered = data - offsets[:, None, None] * eye
    else:
        offsets = data.mean(axis=(1, 2))
        centered = data - offsets[:, None, None]
    if not Z.is_complex:
        offsets = offsets.real
    return MatrixStack(centered, Z.kind), offsets


def covariance(Zc):
    """Matricial covariance ``C_ij = Re Tr(Z_i Z_j^H) / N`` of a centered stack."""
    Zc = as_stack(Zc)
    flat = Zc.data.reshape(Zc.count, -1)
    C = (flat @ flat.conj().T).real / Zc.rows
    return (C + C.T) / 2


def _sign_fix(U):
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def _eig_desc(C):
    w, U = np.linalg.eigh(C)
    order = np.argsort(w)[::-1]
    return w[order], _sign_fix(U[:, order])


def _full_rank_factors(C):
    w, U = _eig_desc(C)
    top = max(w[0], 0.0)
    bad = np.flatnonzero(w <= RANK_RTOL * top) if top > 0 else np.arange(w.size)
    if bad.size:
        # report the component that loads most on the first null direction
        k = int(np.argmax(np.abs(U[:, bad[0]])))
        raise SingularCovarianceError(
            f"covariance is singular: eigenvalue {w[bad[0]]!r} below "
            f"{RANK_RTOL:g} x largest; component {k} is (nearly) a combination "
            "of the others",
            index=k,
        )
    return U, np.sqrt(w)


def whiten(Z):
    """Center and whiten a stack so that its matricial covariance is ``I``.

    ``Y = ((U S^-1 U^T) kron I) Zc`` where ``C = U S^2 U^T``.

    Raises
    ------
    SingularCovarianceError
        If a covariance eigenvalue is below ``RANK_RTOL`` times the largest.
    """
    Zc, offsets = center(Z)
    U, S = _full_rank_factors(covariance(Zc))
    Y = Zc.combine((U / S) @ U.T)
    return WhiteningResult(Y, U, S, offsets, Zc)


def whiten_overdetermined(Z, s):
    """Whiten ``p`` mixtures of ``s < p`` sources onto ``s`` components.

    Keeps the top ``s`` covariance eigenpairs: ``Y = S_s^-1 U_s^T Zc``.
    With ``s == p`` this is exactly :func:`whiten`.

    Raises
    ------
    RankError
        If fewer than ``s`` covariance eigenvalues are significant.
    """
    Z = as_stack(Z)
    p = Z.count
    if not 1 <= s <= p:
        raise ValueError(f"cannot extract {s} components from {p} mixtures")
    if s == p:
        return whiten(Z)
    Zc, offsets = center(Z)
    w, U = _eig_desc(covariance(Zc))
    top = max(w[0], 0.0)
    significant = int(np.count_nonzero(w > RANK_RTOL * top)) if top > 0 else 0
    if significant < s:
        raise RankError(
            f"only {significant} significant covariance eigenvalues, need {s}"
        )
    U, S = U[:, :s], np.sqrt(w[:s])
    Y = Zc.combine((U / S).T)
    return WhiteningResult(Y, U, S, offsets, Zc)


def vectorized_covariance(Zc):
    """Sample covariance of the vectorised centered components, real part."""
    Zc = as_stack(Zc)
    flat = Zc.data.reshape(Zc.count, -1)
    C = (flat @ flat.conj().T).real / flat.shape[1]
    return (C + C.T) / 2


def whiten_vectorized(Z):
    """Reshape-and-whiten for the ICA baseline.

    Every component is treated as ``N*M`` samples; the per-component sample
    mean is removed and the real part of ``z z^H / (NM)`` is whitened.
    The whitened stack keeps the input's matrix shape and is returned as a
    rectangular stack.
    """
    Z = as_stack(Z)
    data = Z.data
    offsets = data.mean(axis=(1, 2))
    if not Z.is_complex:
        offsets = offsets.real
    kind = Z.kind if Z.kind != SELF_ADJOINT else "rectangular"
    Zc = MatrixStack(data - offsets[:, None, None], kind)
    U, S = _full_rank_factors(vectorized_covariance(Zc))
    Y = Zc.combine((U / S) @ U.T)
    return WhiteningResult(Y, U, S, offsets, Zc)
