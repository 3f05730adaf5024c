"""Pointwise 2x2 matrix algebra.

Every function accepts scalar entries or numpy arrays of a common shape, so
the same code evaluates a single matrix or a whole tensor field cell by cell.
"""

from typing import NamedTuple, Union

import numpy as np

from .errors import NotPositiveDefinite

Scalar = Union[float, np.ndarray]


class Mat2(NamedTuple):
    a11: Scalar
    a12: Scalar
    a21: Scalar
    a22: Scalar

    @classmethod
    def from_array(cls, a):
        """View a ``(2, 2, ...)`` array as a Mat2 without copying."""
        return cls(a[0, 0], a[0, 1], a[1, 0], a[1, 1])

    def to_array(self):
        return np.array([[self.a11, self.a12], [self.a21, self.a22]], dtype=float)


class SymMat2(NamedTuple):
    b11: Scalar
    b12: Scalar
    b22: Scalar

    def to_mat(self):
        return Mat2(self.b11, self.b12, self.b12, self.b22)

    def to_array(self):
        return self.to_mat().to_array()


def identity(shape=()):
    one = np.ones(shape) if shape else 1.0
    zero = np.zeros(shape) if shape else 0.0
    return Mat2(one, zero, zero, one)


def _as_mat(A):
    return A.to_mat() if isinstance(A, SymMat2) else A


def det(A):
    if isinstance(A, SymMat2):
        return A.b11 * A.b22 - A.b12 * A.b12
    return A.a11 * A.a22 - A.a12 * A.a21


def trace(A):
    if isinstance(A, SymMat2):
        return A.b11 + A.b22
    return A.a11 + A.a22


def transpose(A):
    return Mat2(A.a11, A.a21, A.a12, A.a22)


def matmul(A, B):
    A, B = _as_mat(A), _as_mat(B)
    return Mat2(
        A.a11 * B.a11 + A.a12 * B.a21,
        A.a11 * B.a12 + A.a12 * B.a22,
        A.a21 * B.a11 + A.a22 * B.a21,
        A.a21 * B.a12 + A.a22 * B.a22,
    )


def add(A, B, alpha=1.0):
    """A + alpha * B."""
    A, B = _as_mat(A), _as_mat(B)
    return Mat2(*(a + alpha * b for a, b in zip(A, B)))


def scale(A, c):
    return type(A)(*(c * a for a in A))


def sym(A):
    """Symmetric part (A + A^T)/2."""
    off = 0.5 * (A.a12 + A.a21)
    return SymMat2(A.a11, off, A.a22)


def bb_from_f(F):
    """B = F F^T."""
    return SymMat2(
        F.a11 * F.a11 + F.a12 * F.a12,
        F.a11 * F.a21 + F.a12 * F.a22,
        F.a21 * F.a21 + F.a22 * F.a22,
    )


def is_positive_definite(B):
    """Strict leading-minor test, elementwise."""
    return np.logical_and(np.asarray(B.b11) > 0.0, np.asarray(det(B)) > 0.0)


def invert_spd(B):
    """Inverse of a symmetric positive definite matrix (or field of them)."""
    d = det(B)
    if not np.all(is_positive_definite(B)):
        raise NotPositiveDefinite("conformation tensor is not positive definite")
    return SymMat2(B.b22 / d, -B.b12 / d, B.b11 / d)


def inv_transpose(F):
    """F^{-T}; caller guarantees det F != 0."""
    d = det(F)
    return Mat2(F.a22 / d, -F.a21 / d, -F.a12 / d, F.a11 / d)


def frob_inner(A, B):
    """Matrix scalar product sum_ij A_ij B_ij."""
    if isinstance(A, SymMat2) and isinstance(B, SymMat2):
        return A.b11 * B.b11 + 2.0 * A.b12 * B.b12 + A.b22 * B.b22
    A, B = _as_mat(A), _as_mat(B)
    return A.a11 * B.a11 + A.a12 * B.a12 + A.a21 * B.a21 + A.a22 * B.a22


def frob_norm_sq(A):
    return frob_inner(A, A)


def minus_identity(B):
    """B - I for a symmetric matrix."""
    return SymMat2(B.b11 - 1.0, B.b12, B.b22 - 1.0)
