"""Homogeneous bivariate polynomials of degree 2 and 3.

Coefficient convention (binomial factors absorbed):

* degree 2: ``(a, b, c)`` stands for ``a*x^2 + 2b*x*y + c*y^2``
* degree 3: ``(a, b, c, d)`` stands for ``a*x^3 + 3b*x^2*y + 3c*x*y^2 + d*y^3``

Sup norms over the unit disc are computed on the unit circle (homogeneity
pushes the maximum to the boundary) with a dense scan followed by
golden-section refinement; accuracy is ~1e-12 relative for these smooth,
low-frequency objectives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class HomPoly:
    """Homogeneous polynomial of degree 2 or 3 in the convention above."""

    degree: int
    coeffs: tuple

    def __post_init__(self):
        if self.degree not in (2, 3):
            raise ValueError(f"degree must be 2 or 3, got {self.degree}")
        n = self.degree + 1
        if len(self.coeffs) != n:
            raise ValueError(f"degree {self.degree} needs {n} coefficients")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    def __call__(self, x, y):
        """Evaluate at (x, y); accepts scalars or numpy arrays."""
        if self.degree == 2:
            a, b, c = self.coeffs
            return a * x * x + 2.0 * b * x * y + c * y * y
        a, b, c, d = self.coeffs
        return a * x**3 + 3.0 * b * x * x * y + 3.0 * c * x * y * y + d * y**3

    @property
    def is_zero(self):
        return all(c == 0.0 for c in self.coeffs)


def eval_poly(pi: HomPoly, u) -> float:
    """Value of ``pi`` at the 2-vector ``u``."""
    u = np.asarray(u, dtype=float)
    return float(pi(u[0], u[1]))


@dataclass(frozen=True)
class GradPoly:
    """Gradient of a HomPoly: two homogeneous components of degree m - 1.

    For a degree-2 source the components are linear forms stored as pairs
    ``(p, q)`` meaning ``p*x + q*y``; for a degree-3 source each component
    is a degree-2 triple in the HomPoly convention.
    """

    source_degree: int
    gx: tuple
    gy: tuple

    def __call__(self, x, y):
        """Evaluate (d/dx, d/dy) at (x, y); broadcasts over arrays."""
        if self.source_degree == 2:
            (p1, q1), (p2, q2) = self.gx, self.gy
            return p1 * x + q1 * y, p2 * x + q2 * y
        ax, bx, cx = self.gx
        ay, by, cy = self.gy
        gx = ax * x * x + 2.0 * bx * x * y + cx * y * y
        gy = ay * x * x + 2.0 * by * x * y + cy * y * y
        return gx, gy


def gradient(pi: HomPoly) -> GradPoly:
    """Exact partial derivatives of ``pi``."""
    if pi.degree == 2:
        a, b, c = pi.coeffs
        # d/dx = 2a x + 2b y, d/dy = 2b x + 2c y
        return GradPoly(2, (2.0 * a, 2.0 * b), (2.0 * b, 2.0 * c))
    a, b, c, d = pi.coeffs
    # d/dx = 3a x^2 + 6b xy + 3c y^2 -> triple (3a, 3b, 3c)
    # d/dy = 3b x^2 + 6c xy + 3d y^2 -> triple (3b, 3c, 3d)
    return GradPoly(3, (3.0 * a, 3.0 * b, 3.0 * c), (3.0 * b, 3.0 * c, 3.0 * d))


def _golden_max(f, lo, hi, iters=80):
    """Golden-section maximization of a smooth scalar function on [lo, hi]."""
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
    return max(f1, f2)


def _circle_max(f, n_scan=4096):
    """Max of a smooth 2*pi-periodic function via scan + golden refinement."""
    t = np.linspace(0.0, 2.0 * np.pi, n_scan, endpoint=False)
    vals = f(t)
    i = int(np.argmax(vals))
    step = 2.0 * np.pi / n_scan
    refined = _golden_max(lambda s: float(f(np.asarray(s))), t[i] - step, t[i] + step)
    return max(float(vals[i]), refined)


def sup_norm(pi: HomPoly) -> float:
    """sup of |pi| over the closed unit disc (attained on the circle)."""
    if pi.is_zero:
        return 0.0
    return _circle_max(lambda t: np.abs(pi(np.cos(t), np.sin(t))))


def grad_sup_norm(pi: HomPoly) -> float:
    """sup of the Euclidean norm of grad(pi) over the unit disc."""
    if pi.is_zero:
        return 0.0
    g = gradient(pi)

    def norm2(t):
        gx, gy = g(np.cos(t), np.sin(t))
        return gx * gx + gy * gy

    return float(np.sqrt(_circle_max(norm2)))


def compose(pi: HomPoly, A) -> HomPoly:
    """Coefficients of pi(A u), expanded in closed form (A may be singular)."""
    A = np.asarray(A, dtype=float)
    if A.shape != (2, 2):
        raise ValueError("A must be a 2x2 matrix")
    p, q = A[0, 0], A[0, 1]
    r, s = A[1, 0], A[1, 1]
    if pi.degree == 2:
        a, b, c = pi.coeffs
        # [pi o A] = A^T [pi] A written out entrywise
        a2 = a * p * p + 2.0 * b * p * r + c * r * r
        b2 = a * p * q + b * (p * s + q * r) + c * r * s
        c2 = a * q * q + 2.0 * b * q * s + c * s * s
        return HomPoly(2, (a2, b2, c2))
    a, b, c, d = pi.coeffs
    a3 = a * p**3 + 3.0 * b * p * p * r + 3.0 * c * p * r * r + d * r**3
    b3 = (
        a * p * p * q
        + b * (p * p * s + 2.0 * p * q * r)
        + c * (2.0 * p * r * s + q * r * r)
        + d * r * r * s
    )
    c3 = (
        a * p * q * q
        + b * (2.0 * p * q * s + q * q * r)
        + c * (p * s * s + 2.0 * q * r * s)
        + d * r * s * s
    )
    d3 = a * q**3 + 3.0 * b * q * q * s + 3.0 * c * q * s * s + d * s**3
    return HomPoly(3, (a3, b3, c3, d3))


def disc(pi: HomPoly) -> float:
    """Discriminant 4(ac - b^2)(bd - c^2) - (ad - bc)^2 of a binary cubic.

    Covariant under composition: disc(pi o A) = det(A)^6 * disc(pi).
    """
    if pi.degree != 3:
        raise ValueError("disc is defined for degree-3 polynomials only")
    a, b, c, d = pi.coeffs
    return 4.0 * (a * c - b * b) * (b * d - c * c) - (a * d - b * c) ** 2
