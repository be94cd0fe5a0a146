"""2x2 symmetric matrix calculus.

Eigendecompositions use the closed-form half-angle formula (deterministic,
no iteration); matrix functions act on the eigenvalues in a diagonalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .poly2d import HomPoly


class DomainError(ValueError):
    """Matrix function applied outside its spectral domain."""


@dataclass(frozen=True)
class SymMat2:
    """Symmetric 2x2 matrix stored as the three entries (m11, m12, m22)."""

    m11: float
    m12: float
    m22: float

    def __post_init__(self):
        object.__setattr__(self, "m11", float(self.m11))
        object.__setattr__(self, "m12", float(self.m12))
        object.__setattr__(self, "m22", float(self.m22))

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0, 1.0)

    @classmethod
    def diag(cls, a, b):
        return cls(a, 0.0, b)

    @classmethod
    def from_array(cls, A):
        A = np.asarray(A, dtype=float)
        if A.shape != (2, 2):
            raise ValueError("expected a 2x2 array")
        if abs(A[0, 1] - A[1, 0]) > 1e-12 * (1.0 + abs(A[0, 1]) + abs(A[1, 0])):
            raise ValueError("matrix is not symmetric")
        return cls(A[0, 0], 0.5 * (A[0, 1] + A[1, 0]), A[1, 1])

    def as_array(self):
        return np.array([[self.m11, self.m12], [self.m12, self.m22]])

    @property
    def det(self):
        return self.m11 * self.m22 - self.m12 * self.m12

    @property
    def trace(self):
        return self.m11 + self.m22

    def scaled(self, t):
        return SymMat2(t * self.m11, t * self.m12, t * self.m22)

    def add(self, other):
        return SymMat2(self.m11 + other.m11, self.m12 + other.m12, self.m22 + other.m22)

    def is_spd(self, tol=0.0):
        return self.m11 > tol and self.det > tol


def bracket(pi: HomPoly) -> SymMat2:
    """Matrix (a, b; b, c) of a degree-2 polynomial a x^2 + 2b xy + c y^2."""
    if pi.degree != 2:
        raise ValueError("bracket is defined for degree-2 polynomials only")
    a, b, c = pi.coeffs
    return SymMat2(a, b, c)


def eigen(M: SymMat2):
    """Closed-form eigendecomposition M = U^T diag(l1, l2) U with l1 >= l2.

    U is the proper rotation whose rows are the eigenvectors; for l1 == l2
    the angle is 0 (U = Id).  Reconstruction is accurate to ~1e-15 * ||M||.
    """
    mid = 0.5 * (M.m11 + M.m22)
    diff = 0.5 * (M.m11 - M.m22)
    rad = np.hypot(diff, M.m12)
    l1, l2 = mid + rad, mid - rad
    theta = 0.5 * np.arctan2(2.0 * M.m12, M.m11 - M.m22) if rad > 0.0 else 0.0
    c, s = np.cos(theta), np.sin(theta)
    U = np.array([[c, s], [-s, c]])
    return float(l1), float(l2), U


def eigen_angle(M: SymMat2) -> float:
    """Orientation of the leading eigenvector, in (-pi/2, pi/2]."""
    if np.hypot(0.5 * (M.m11 - M.m22), M.m12) == 0.0:
        return 0.0
    return float(0.5 * np.arctan2(2.0 * M.m12, M.m11 - M.m22))


def _rebuild(l1, l2, U):
    D = np.diag([l1, l2])
    return SymMat2.from_array(U.T @ D @ U)


def matrix_function(M: SymMat2, kind: str, alpha: float | None = None) -> SymMat2:
    """Apply abs / sqrt / power-alpha to the eigenvalues of M.

    sqrt and nonnegative powers require eigenvalues >= 0 (tiny negative
    values from roundoff, below 1e-13 * ||M||, are clamped to 0); negative
    powers additionally require strictly positive eigenvalues.
    """
    l1, l2, U = eigen(M)
    scale = max(abs(l1), abs(l2), 1e-300)
    if kind == "abs":
        return _rebuild(abs(l1), abs(l2), U)
    if kind == "sqrt":
        lo = min(l1, l2)
        if lo < -1e-13 * scale:
            raise DomainError(f"sqrt of a matrix with negative eigenvalue {lo}")
        return _rebuild(np.sqrt(max(l1, 0.0)), np.sqrt(max(l2, 0.0)), U)
    if kind == "power":
        if alpha is None:
            raise ValueError("power requires an exponent alpha")
        lo = min(l1, l2)
        if lo < -1e-13 * scale:
            raise DomainError(f"power of a matrix with negative eigenvalue {lo}")
        l1, l2 = max(l1, 0.0), max(l2, 0.0)
        if alpha < 0.0 and min(l1, l2) == 0.0:
            raise DomainError("negative power of a singular matrix")
        return _rebuild(l1**alpha, l2**alpha, U)
    raise ValueError(f"unknown matrix function kind {kind!r}")


def matrix_abs(M: SymMat2) -> SymMat2:
    return matrix_function(M, "abs")


def matrix_sqrt(M: SymMat2) -> SymMat2:
    return matrix_function(M, "sqrt")


def matrix_power(M: SymMat2, alpha: float) -> SymMat2:
    return matrix_function(M, "power", alpha)


def operator_norm(M: SymMat2) -> float:
    """Largest eigenvalue magnitude."""
    l1, l2, _ = eigen(M)
    return max(abs(l1), abs(l2))


# Batched helpers on entry arrays (m11, m12, m22), used by the metric-field
# evaluators; semantics match the scalar routines above.


def eig_batch(m11, m12, m22):
    """Eigenvalues (l1 >= l2) and leading-eigenvector angle, elementwise."""
    mid = 0.5 * (m11 + m22)
    rad = np.hypot(0.5 * (m11 - m22), m12)
    theta = 0.5 * np.arctan2(2.0 * m12, m11 - m22)
    return mid + rad, mid - rad, theta


def rebuild_batch(l1, l2, theta):
    """Entries of U(theta)^T diag(l1, l2) U(theta), elementwise."""
    c, s = np.cos(theta), np.sin(theta)
    return l1 * c * c + l2 * s * s, (l1 - l2) * s * c, l1 * s * s + l2 * c * c


def sqrt_psd_batch(m11, m12, m22):
    """Square root of PSD matrices via sqrt(S) = (S + sqrt(det) I)/sqrt(tr + 2 sqrt(det))."""
    det = np.maximum(m11 * m22 - m12 * m12, 0.0)
    tr = m11 + m22
    root = np.sqrt(det)
    denom = np.sqrt(np.maximum(tr + 2.0 * root, 0.0))
    safe = denom > 0.0
    inv = np.where(safe, 1.0 / np.where(safe, denom, 1.0), 0.0)
    return (m11 + root) * inv, m12 * inv, (m22 + root) * inv
