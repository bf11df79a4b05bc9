"""Core containers: matrix stacks and objective kinds."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError

SELF_ADJOINT = "self-adjoint"
RECTANGULAR = "rectangular"
COMPLEX_RECTANGULAR = "complex-rectangular"
STACK_KINDS = (SELF_ADJOINT, RECTANGULAR, COMPLEX_RECTANGULAR)

HERMITIAN_RTOL = 1e-12


class ObjectiveKind(str, enum.Enum):
    """Contrast functions that can be minimised over the orthogonal group."""

    SA_KURTOSIS = "SA-Kurtosis"
    SA_ENTROPY = "SA-Entropy"
    RECT_KURTOSIS = "Rect-Kurtosis"
    RECT_ENTROPY = "Rect-Entropy"
    SCALAR_KURTOSIS = "Scalar-Kurtosis"
    SCALAR_NEGENTROPY = "Scalar-Negentropy"

    @property
    def is_matrix(self) -> bool:
        return self in MATRIX_KINDS

    @property
    def is_scalar(self) -> bool:
        return self in SCALAR_KINDS

    @property
    def is_self_adjoint(self) -> bool:
        return self in (ObjectiveKind.SA_KURTOSIS, ObjectiveKind.SA_ENTROPY)

    @property
    def is_entropy(self) -> bool:
        return self in (
            ObjectiveKind.SA_ENTROPY,
            ObjectiveKind.RECT_ENTROPY,
            ObjectiveKind.SCALAR_NEGENTROPY,
        )

    @classmethod
    def parse(cls, value) -> "ObjectiveKind":
        if isinstance(value, cls):
            return value
        for kind in cls:
            if value in (kind.value, kind.name):
                return kind
        raise ValueError(f"unknown objective kind {value!r}")


MATRIX_KINDS = (
    ObjectiveKind.SA_KURTOSIS,
    ObjectiveKind.SA_ENTROPY,
    ObjectiveKind.RECT_KURTOSIS,
    ObjectiveKind.RECT_ENTROPY,
)
SCALAR_KINDS = (ObjectiveKind.SCALAR_KURTOSIS, ObjectiveKind.SCALAR_NEGENTROPY)


def is_hermitian(X, rtol=HERMITIAN_RTOL) -> bool:
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        return False
    scale = max(np.abs(X).max(initial=0.0), 1.0)
    return bool(np.abs(X - X.conj().T).max(initial=0.0) <= rtol * scale)


@dataclass(frozen=True)
class MatrixStack:
    """An ordered array of ``s`` equally sized ``N x M`` matrices.

    ``data`` has shape ``(s, N, M)``. ``kind`` is one of ``"self-adjoint"``,
    ``"rectangular"`` or ``"complex-rectangular"``; when omitted it is
    inferred (complex data is complex-rectangular, real data rectangular).
    """

    data: np.ndarray
    kind: str = RECTANGULAR

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3:
            raise DimensionError(
                f"a matrix stack needs shape (s, N, M), got {data.shape}"
            )
        if data.shape[0] < 1 or data.shape[1] < 1 or data.shape[2] < 1:
            raise DimensionError(f"empty matrix stack {data.shape}")
        if self.kind not in STACK_KINDS:
            raise ValueError(f"unknown stack kind {self.kind!r}")
        if np.iscomplexobj(data):
            data = data.astype(np.complex128, copy=False)
        else:
            data = data.astype(np.float64, copy=False)
        if self.kind == SELF_ADJOINT:
            if data.shape[1] != data.shape[2]:
                raise DimensionError(
                    f"self-adjoint stack needs square matrices, got {data.shape[1:]}"
                )
            for i, X in enumerate(data):
                if not is_hermitian(X):
                    raise ValueError(f"component {i} is not Hermitian")
        elif self.kind == RECTANGULAR and np.iscomplexobj(data):
            object.__setattr__(self, "kind", COMPLEX_RECTANGULAR)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_matrices(cls, matrices, kind=None) -> "MatrixStack":
        arrays = [np.asarray(m) for m in matrices]
        shapes = {a.shape for a in arrays}
        if len(shapes) != 1:
            raise DimensionError(f"matrices have differing shapes {sorted(shapes)}")
        data = np.stack(arrays)
        if kind is None:
            kind = COMPLEX_RECTANGULAR if np.iscomplexobj(data) else RECTANGULAR
        return cls(data, kind)

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def rows(self) -> int:
        return self.data.shape[1]

    @property
    def cols(self) -> int:
        return self.data.shape[2]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.data)

    def __len__(self):
        return self.count

    def __getitem__(self, i):
        return self.data[i]

    def __iter__(self):
        return iter(self.data)

    def with_data(self, data) -> "MatrixStack":
        """Same kind, new contents (kind downgraded if Hermitian symmetry is lost)."""
        return MatrixStack(data, self.kind)

    def combine(self, B) -> "MatrixStack":
        """Return the stack ``(B kron I) self``, i.e. ``out_i = sum_j B_ij self_j``."""
        B = np.asarray(B)
        if B.ndim != 2 or B.shape[1] != self.count:
            raise DimensionError(
                f"combination matrix {B.shape} does not match {self.count} components"
            )
        return MatrixStack(np.tensordot(B, self.data, axes=(1, 0)), self.kind)


def as_stack(Z, kind=None) -> MatrixStack:
    if isinstance(Z, MatrixStack):
        return Z
    if isinstance(Z, np.ndarray) and Z.ndim == 3:
        if kind is None:
            kind = COMPLEX_RECTANGULAR if np.iscomplexobj(Z) else RECTANGULAR
        return MatrixStack(Z, kind)
    return MatrixStack.from_matrices(Z, kind)
