"""Linear matrix embeddings.

All embeddings here are linear, so they commute with the mixing model:
embedding the mixtures gives the mixtures of the embedded sources, and FCA
can be run on the embedded stack.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .datagen import stream
from .exceptions import DimensionError
from .stack import (
    COMPLEX_RECTANGULAR,
    RECTANGULAR,
    SELF_ADJOINT,
    MatrixStack,
    as_stack,
)

__all__ = [
    "EmbeddingSpec",
    "symmetric_spec",
    "rectangular_spec",
    "spectrogram_spec",
    "embed",
    "stft",
    "hamming",
]

EMBEDDING_KINDS = ("symmetric", "rectangular", "spectrogram")


@dataclass(frozen=True)
class EmbeddingSpec:
    """Parameters of an embedding.

    For ``symmetric`` and ``rectangular`` kinds, ``source_shape`` is the
    ``(N, M)`` shape of the inputs and ``zero_positions`` the (sorted, 0-based)
    slots of the target vector left at zero; the same slots are used for every
    component. For ``spectrogram`` only the STFT parameters matter.
    """

    kind: str
    target_rows: Optional[int] = None
    target_cols: Optional[int] = None
    source_shape: Optional[tuple] = None
    zero_positions: Optional[np.ndarray] = None
    window_len: int = 250
    hop: int = 125
    dft_len: int = 256

    def __post_init__(self):
        if self.kind not in EMBEDDING_KINDS:
            raise ValueError(f"unknown embedding kind {self.kind!r}")
        if self.kind == "spectrogram":
            if not 1 <= self.hop <= self.window_len <= self.dft_len:
                raise ValueError("spectrogram needs 1 <= hop <= window_len <= dft_len")
            return
        N, M = self.source_shape
        slots = self.slots
        if slots < N * M:
            raise DimensionError(
                f"target holds {slots} entries, fewer than the {N * M} source entries"
            )
        zeros = np.asarray(self.zero_positions, dtype=np.intp)
        if zeros.size != slots - N * M or np.unique(zeros).size != zeros.size:
            raise ValueError(f"need {slots - N * M} distinct zero positions")
        if zeros.size and (zeros.min() < 0 or zeros.max() >= slots):
            raise ValueError("zero position out of range")
        object.__setattr__(self, "zero_positions", np.sort(zeros))

    @property
    def slots(self) -> int:
        if self.kind == "symmetric":
            n = self.target_rows
            return n * (n - 1) // 2
        return self.target_rows * self.target_cols


def _draw_zeros(slots, used, seed):
    rng = stream(seed)
    return np.sort(rng.choice(slots, size=slots - used, replace=False))


def symmetric_spec(source_shape, target_dim=None, seed=0) -> EmbeddingSpec:
    """Spec for packing ``N x M`` matrices into ``N' x N'`` symmetric ones.

    ``target_dim`` defaults to the smallest ``N'`` with ``N'(N'-1)/2 >= NM``.
    The zero slots are drawn uniformly from the stream for ``seed``.
    """
    N, M = source_shape
    if target_dim is None:
        target_dim = int(np.ceil((1 + np.sqrt(1 + 8 * N * M)) / 2))
        while (target_dim - 1) * (target_dim - 2) // 2 >= N * M:
            target_dim -= 1
    slots = target_dim * (target_dim - 1) // 2
    if slots < N * M:
        raise DimensionError(f"N'={target_dim} cannot hold {N * M} entries")
    return EmbeddingSpec(
        "symmetric",
        target_rows=target_dim,
        target_cols=target_dim,
        source_shape=(N, M),
        zero_positions=_draw_zeros(slots, N * M, seed),
    )


def rectangular_spec(source_shape, target_rows, target_cols, seed=0) -> EmbeddingSpec:
    """Spec for reshaping ``N x M`` matrices into ``N' x M'`` ones with zero fill."""
    N, M = source_shape
    slots = target_rows * target_cols
    if slots < N * M:
        raise DimensionError(f"{target_rows}x{target_cols} cannot hold {N * M} entries")
    return EmbeddingSpec(
        "rectangular",
        target_rows=target_rows,
        target_cols=target_cols,
        source_shape=(N, M),
        zero_positions=_draw_zeros(slots, N * M, seed),
    )


def spectrogram_spec(window_len=250, hop=125, dft_len=256) -> EmbeddingSpec:
    return EmbeddingSpec("spectrogram", window_len=window_len, hop=hop, dft_len=dft_len)


def hamming(window_len):
    """Symmetric Hamming window ``0.54 - 0.46 cos(2 pi n / (L - 1))``."""
    if window_len == 1:
        return np.ones(1)
    n = np.arange(window_len)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (window_len - 1))


def stft(x, window_len=250, hop=125, dft_len=256):
    """One-sided short-time Fourier transform with a Hamming window.

    Returns a ``(dft_len // 2 + 1) x n_frames`` complex matrix whose column
    ``t`` is the DFT of ``x[t*hop : t*hop + window_len] * w`` zero-padded to
    ``dft_len``. Trailing samples that do not fill a whole window are dropped.
    """
    x = np.asarray(x)
    if x.ndim != 1:
        raise DimensionError("stft expects a 1-D signal")
    if not 1 <= hop <= window_len <= dft_len:
        raise ValueError("stft needs 1 <= hop <= window_len <= dft_len")
    if x.size < window_len:
        raise DimensionError(
            f"signal of length {x.size} is shorter than the window ({window_len})"
        )
    n_frames = (x.size - window_len) // hop + 1
    idx = np.arange(n_frames)[:, None] * hop + np.arange(window_len)[None, :]
    frames = x[idx] * hamming(window_len)
    return np.fft.rfft(frames, n=dft_len, axis=1).T


def _vec(X):
    return X.reshape(-1, order="F")


def _scatter(spec, data):
    """Place each vectorised component in the non-zero slots of the target."""
    s = data.shape[0]
    keep = np.ones(spec.slots, dtype=bool)
    keep[spec.zero_positions] = False
    out = np.zeros((s, spec.slots), dtype=data.dtype)
    out[:, keep] = np.stack([_vec(X) for X in data])
    return out


def embed(Z, spec: EmbeddingSpec) -> MatrixStack:
    """Embed a stack of matrices (or a list of signals for spectrograms).

    * ``symmetric``: ``vec(Z_i)`` fills the strict upper triangle (row-major
      order) around the zero slots, then ``Z' + Z'^H``.
    * ``rectangular``: ``vec(Z_i)`` around the zero slots, reshaped
      column-major to ``N' x M'``.
    * ``spectrogram``: the STFT of every signal.
    """
    if spec.kind == "spectrogram":
        signals = [np.asarray(z).ravel() for z in _signals(Z)]
        lengths = {z.size for z in signals}
        if len(lengths) != 1:
            raise DimensionError("all signals must have the same length")
        data = np.stack([stft(z, spec.window_len, spec.hop, spec.dft_len) for z in signals])
        return MatrixStack(data, COMPLEX_RECTANGULAR)

    Z = as_stack(Z)
    if (Z.rows, Z.cols) != tuple(spec.source_shape):
        raise DimensionError(
            f"spec built for {spec.source_shape}, got {(Z.rows, Z.cols)}"
        )
    flat = _scatter(spec, Z.data)
    s = Z.count
    if spec.kind == "rectangular":
        data = flat.reshape(s, spec.target_cols, spec.target_rows).transpose(0, 2, 1)
        kind = COMPLEX_RECTANGULAR if Z.is_complex else RECTANGULAR
        return MatrixStack(np.ascontiguousarray(data), kind)
    n = spec.target_rows
    iu = np.triu_indices(n, k=1)
    upper = np.zeros((s, n, n), dtype=flat.dtype)
    upper[:, iu[0], iu[1]] = flat
    return MatrixStack(upper + upper.conj().transpose(0, 2, 1), SELF_ADJOINT)


def _signals(Z):
    if isinstance(Z, MatrixStack):
        return [X.ravel() for X in Z.data]
    Z = np.asarray(Z) if not isinstance(Z, (list, tuple)) else Z
    if isinstance(Z, np.ndarray) and Z.ndim == 1:
        return [Z]
    return list(Z)
