"""Random-matrix ensembles, synthetic waveforms and the mixing operator.

Random streams
--------------
Every random draw comes from a PCG64 generator seeded with
``SeedSequence([seed, *keys])`` (see :func:`stream`). Experiments derive one
stream per (seed, trial, component) so results do not depend on evaluation
order. Gaussian variates are produced by the Box-Muller transform on the
generator's uniform doubles (:func:`gaussian`), which keeps the exact
sampling algorithm fixed independently of numpy's own normal sampler.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import DimensionError
from .stack import MatrixStack, as_stack

__all__ = [
    "EnsembleSpec",
    "stream",
    "gaussian",
    "random_orthogonal",
    "dct_bases",
    "sample",
    "mix",
    "synth_waveform",
    "normalize_component",
]

ENSEMBLE_KINDS = ("GOE", "Wishart", "DCT-spectrum", "iid-Gaussian", "constant-image")


def stream(seed, *keys) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, *keys)``; all entries must be >= 0."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *keys])))


def gaussian(rng, shape) -> np.ndarray:
    """Standard normal array via Box-Muller on ``rng.random``.

    Pairs ``(u1, u2)`` of uniforms give ``sqrt(-2 log u1) cos(2 pi u2)`` and
    ``sqrt(-2 log u1) sin(2 pi u2)``, interleaved in C order. ``u1`` is taken
    from ``(0, 1]`` so the logarithm is finite.
    """
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    n = int(np.prod(shape))
    pairs = (n + 1) // 2
    u = rng.random((pairs, 2))
    r = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    z = np.empty((pairs, 2))
    z[:, 0] = r * np.cos(theta)
    z[:, 1] = r * np.sin(theta)
    return z.ravel()[:n].reshape(shape)


def random_orthogonal(s, rng) -> np.ndarray:
    """Haar-distributed ``s x s`` orthogonal matrix (QR of a Gaussian matrix)."""
    Q, R = np.linalg.qr(gaussian(rng, (s, s)))
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d


def dct_bases(N, M):
    """Orthogonal sine/cosine bases ``U`` (N x N) and ``V`` (M x M).

    ``U[i, j] ~ sin(pi/(2N) (i+1)(2j+1))`` and ``V[i, j] ~ cos(pi/(2M) i (2j+1))``
    with 0-based indices; rows are scaled to unit norm, which makes both
    matrices orthogonal (DST-II / DCT-II bases).
    """
    i = np.arange(N)[:, None]
    j = np.arange(N)[None, :]
    U = np.sin(np.pi / (2 * N) * (i + 1) * (2 * j + 1))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    i = np.arange(M)[:, None]
    j = np.arange(M)[None, :]
    V = np.cos(np.pi / (2 * M) * i * (2 * j + 1))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    return U, V


@dataclass(frozen=True)
class EnsembleSpec:
    """What to sample.

    ``kind`` is one of ``GOE`` (``(G + G^T)/sqrt(2N)``), ``Wishart``
    (``G G^T / M`` with ``G`` ``N x M``), ``DCT-spectrum`` (``U D V^T`` with
    singular values ``spectrum_fn((i - 1/2)/N)``), ``iid-Gaussian`` (entries
    ``N(0, 1/M)``) or ``constant-image`` (every entry equal to ``value``).
    """

    kind: str
    n: int
    m: Optional[int] = None
    spectrum_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    rng_seed: int = 0
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ENSEMBLE_KINDS:
            raise ValueError(f"unknown ensemble {self.kind!r}")
        if self.n < 1 or (self.m is not None and self.m < 1):
            raise DimensionError("ensemble dimensions must be positive")
        if self.kind == "DCT-spectrum" and self.spectrum_fn is None:
            raise ValueError("DCT-spectrum needs a spectrum_fn")

    @property
    def cols(self) -> int:
        if self.m is not None:
            return self.m
        return self.n


def sample(spec: EnsembleSpec, rng=None) -> np.ndarray:
    """Draw one matrix from ``spec``.

    ``rng`` overrides the stream derived from ``spec.rng_seed``.
    """
    N, M = spec.n, spec.cols
    if rng is None:
        rng = stream(spec.rng_seed)
    if spec.kind == "GOE":
        G = gaussian(rng, (N, N))
        return (G + G.T) / np.sqrt(2 * N)
    if spec.kind == "Wishart":
        G = gaussian(rng, (N, M))
        return G @ G.T / M
    if spec.kind == "iid-Gaussian":
        return gaussian(rng, (N, M)) / np.sqrt(M)
    if spec.kind == "constant-image":
        return np.full((N, M), float(spec.value))
    # DCT-spectrum
    k = min(N, M)
    x = (np.arange(1, k + 1) - 0.5) / N
    d = np.asarray(spec.spectrum_fn(x), dtype=float)
    if np.any(d < 0):
        raise ValueError("spectrum_fn must be nonnegative")
    U, V = dct_bases(N, M)
    return (U[:, :k] * d) @ V[:, :k].T


def normalize_component(X, self_adjoint=False):
    """Center ``X`` and scale it so that ``Tr(X X^H) / N = 1``."""
    X = np.asarray(X)
    N = X.shape[0]
    if self_adjoint:
        X = X - np.trace(X) / N * np.eye(N)
    else:
        X = X - X.mean()
    return X / np.sqrt(np.vdot(X, X).real / N)


def mix(X, A) -> MatrixStack:
    """Apply the mixing model ``Z_i = sum_j A_ij X_j``."""
    X = as_stack(X)
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] != X.count:
        raise DimensionError(
            f"mixing matrix {A.shape} incompatible with {X.count} components"
        )
    return X.combine(A)


def synth_waveform(kind, length, period) -> np.ndarray:
    """Unit-amplitude periodic waveform sampled at ``n = 0 .. length-1``.

    ``square`` is +1 on the first half of each period and -1 on the second,
    ``sawtooth`` ramps linearly from -1 towards 1, ``cosine`` is
    ``cos(2 pi n / period)``.
    """
    if length < 1 or not period > 0:
        raise ValueError("length and period must be positive")
    n = np.arange(length)
    phase = np.mod(n, period) / period
    if kind == "square":
        return np.where(phase < 0.5, 1.0, -1.0)
    if kind == "sawtooth":
        return 2.0 * phase - 1.0
    if kind == "cosine":
        return np.cos(2.0 * np.pi * n / period)
    raise ValueError(f"unknown waveform {kind!r}")
