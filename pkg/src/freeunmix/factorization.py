"""Free component factorization (FCF) and its ICA counterpart (ICF).

Both pipelines whiten the observed stack, find the orthogonal ``W`` that
minimises the contrast, and return ``Ahat = U S U^T W`` together with the
components ``Xhat = (Ahat^-1 kron I) Z``, sorted so that the most
non-Gaussian component comes first.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingSpec, embed
from .exceptions import DimensionError, IdentifiabilityWarning
from .free_stats import free_kurtosis_rect, free_kurtosis_sa
from .manifold_opt import (
    OptimizerConfig,
    OptimizerTrace,
    component_statistic,
    optimize,
)
from .stack import SELF_ADJOINT, MatrixStack, ObjectiveKind, as_stack
from .whitening import whiten, whiten_overdetermined, whiten_vectorized

__all__ = ["FactorizationResult", "fcf", "icf", "unmix_via_embedding", "statistics"]

#: Components with |kappa_4| below this multiple of 1/N look semicircular.
IDENTIFIABILITY_FACTOR = 10.0


@dataclass
class FactorizationResult:
    """``Z = (mixing_estimate kron I) components``.

    ``statistic_per_component`` holds the signed kurtosis (kurtosis kinds),
    the free entropy (free-entropy kind) or the negentropy approximation
    (scalar negentropy kind) of each whitened component, in output order.
    """

    mixing_estimate: np.ndarray
    components: MatrixStack
    statistic_per_component: np.ndarray
    objective_kind: ObjectiveKind
    trace: OptimizerTrace
    whitened_components: MatrixStack = None

    def reconstruct(self) -> np.ndarray:
        return np.tensordot(self.mixing_estimate, self.components.data, axes=(1, 0))


def statistics(kind, X: MatrixStack) -> np.ndarray:
    """Reported per-component statistic (see :class:`FactorizationResult`)."""
    kind = ObjectiveKind.parse(kind)
    if kind in (ObjectiveKind.SA_KURTOSIS, ObjectiveKind.RECT_KURTOSIS,
                ObjectiveKind.SCALAR_KURTOSIS):
        # contrast is -|k|; recover the signed value
        stats = []
        for Xi in X.data:
            if kind == ObjectiveKind.SA_KURTOSIS:
                stats.append(free_kurtosis_sa(Xi))
            elif kind == ObjectiveKind.RECT_KURTOSIS:
                stats.append(free_kurtosis_rect(Xi))
            else:
                x = Xi.ravel()
                stats.append(float(np.mean(x**4) - 3.0 * np.mean(x**2) ** 2))
        return np.array(stats)
    if kind == ObjectiveKind.SCALAR_NEGENTROPY:
        return np.array([-component_statistic(kind, Xi) for Xi in X.data])
    return np.array([component_statistic(kind, Xi) for Xi in X.data])


def _sort_order(kind, stats):
    # stable sorts keep the original index order on ties
    if kind in (ObjectiveKind.SA_ENTROPY, ObjectiveKind.RECT_ENTROPY):
        return np.argsort(stats, kind="stable")
    return np.argsort(-np.abs(stats), kind="stable")


def _check_kind(kind, Z):
    if not kind.is_matrix:
        raise ValueError(f"fcf needs a matrix objective, got {kind.value}")
    if kind.is_self_adjoint and Z.kind != SELF_ADJOINT:
        raise ValueError(f"{kind.value} needs a self-adjoint stack, got {Z.kind}")
    if not kind.is_self_adjoint and Z.kind == SELF_ADJOINT:
        raise ValueError(f"{kind.value} needs a rectangular stack, got {Z.kind}")


def _identifiability_check(Y: MatrixStack):
    N = Y.rows
    if Y.kind == SELF_ADJOINT:
        kappas = [free_kurtosis_sa(X) for X in Y.data]
    else:
        kappas = [free_kurtosis_rect(X) for X in Y.data]
    flat = [i for i, k in enumerate(kappas) if abs(k) < IDENTIFIABILITY_FACTOR / N]
    if len(flat) >= 2:
        warnings.warn(
            f"components {flat} have |free kurtosis| below {IDENTIFIABILITY_FACTOR:g}/N; "
            "at most one semicircular/free Poisson component is identifiable",
            IdentifiabilityWarning,
            stacklevel=3,
        )


def _finish(kind, Z, white, W, trace, check_identifiability):
    A_hat = white.dewhitening_matrix @ W
    Xw = white.whitened.combine(W.T)
    stats = statistics(kind, Xw)
    order = _sort_order(kind, stats)
    A_hat = A_hat[:, order]
    stats = stats[order]
    Xw = Xw.with_data(Xw.data[order])
    if check_identifiability:
        _identifiability_check(Xw)
    if A_hat.shape[0] == A_hat.shape[1]:
        comps = np.linalg.solve(A_hat, Z.data.reshape(Z.count, -1))
    else:
        comps = np.linalg.lstsq(A_hat, Z.data.reshape(Z.count, -1), rcond=None)[0]
    comps = comps.reshape((-1,) + Z.data.shape[1:])
    return FactorizationResult(
        mixing_estimate=A_hat,
        components=MatrixStack(comps, Z.kind),
        statistic_per_component=stats,
        objective_kind=kind,
        trace=trace,
        whitened_components=Xw,
    )


def fcf(Z, kind=ObjectiveKind.SA_KURTOSIS, cfg=None, n_components=None):
    """Free component factorization of a stack of mixed matrices.

    Parameters
    ----------
    Z : MatrixStack or array_like, shape (p, N, M)
        Observed mixtures.
    kind : ObjectiveKind
        One of the four matrix objectives; must agree with the stack kind.
    cfg : OptimizerConfig, optional
    n_components : int, optional
        Number of sources ``s < p`` for overdetermined mixtures.

    Returns
    -------
    FactorizationResult

    Warns
    -----
    IdentifiabilityWarning
        If two or more recovered components have ``|kappa_4| < 10/N``.
    """
    kind = ObjectiveKind.parse(kind)
    Z = as_stack(Z)
    _check_kind(kind, Z)
    cfg = cfg or OptimizerConfig()
    if n_components is None or n_components == Z.count:
        white = whiten(Z)
    else:
        white = whiten_overdetermined(Z, n_components)
    W, trace = optimize(kind, white.whitened, cfg)
    return _finish(kind, Z, white, W, trace, True)


def icf(Z, kind=ObjectiveKind.SCALAR_KURTOSIS, cfg=None):
    """Independent component factorization on the vectorised components.

    The ICA baseline: every component is flattened to ``N*M`` samples, whitened
    with the sample covariance and unmixed with the classical kurtosis or the
    cumulant negentropy approximation.
    """
    kind = ObjectiveKind.parse(kind)
    if not kind.is_scalar:
        raise ValueError(f"icf needs a scalar objective, got {kind.value}")
    Z = as_stack(Z)
    if Z.is_complex:
        raise DimensionError("icf needs real-valued components")
    cfg = cfg or OptimizerConfig()
    white = whiten_vectorized(Z)
    W, trace = optimize(kind, white.whitened, cfg)
    return _finish(kind, Z, white, W, trace, False)


def _as_input_stack(Z):
    if isinstance(Z, MatrixStack):
        return Z
    arrays = [np.asarray(z) for z in Z]
    if all(a.ndim == 1 for a in arrays):
        arrays = [a[None, :] for a in arrays]
    return MatrixStack.from_matrices(arrays)


def unmix_via_embedding(signals, spec: EmbeddingSpec, kind, cfg=None, full_output=False):
    """Estimate the mixing matrix on an embedding, unmix the raw inputs.

    ``signals`` is a list of ``s`` equal-length vectors (or a stack of
    matrices for the symmetric/rectangular embeddings). Because the embedding
    is linear, ``Ahat`` estimated on the embedded stack applies to the raw
    data: the unmixed inputs are ``Ahat^-1`` applied to the raw rows.

    Returns
    -------
    A_hat : ndarray, shape (s, s)
    unmixed : ndarray
        Same shape as the stacked input (``(s, T)`` for signals).
    result : FactorizationResult
        Only when ``full_output`` is true; the factorization of the embedded
        stack.
    """
    kind = ObjectiveKind.parse(kind)
    raw = _as_input_stack(signals)
    if spec.kind == "spectrogram":
        embedded = embed([x.ravel() for x in raw.data], spec)
    else:
        embedded = embed(raw, spec)
    if kind.is_scalar:
        result = icf(embedded, kind, cfg)
    else:
        result = fcf(embedded, kind, cfg)
    A_hat = result.mixing_estimate
    unmixed = np.linalg.solve(A_hat, raw.data.reshape(raw.count, -1))
    if isinstance(signals, MatrixStack) or spec.kind != "spectrogram":
        unmixed = unmixed.reshape(raw.data.shape)
    if full_output:
        return A_hat, unmixed, result
    return A_hat, unmixed
