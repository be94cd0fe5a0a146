"""Optimal aspect-ratio metrics for P1/P2 interpolation and metric fields.

For a homogeneous polynomial ``pi`` of degree m the metric is

* m = 2:  ``M2(pi) = ||pi|| * |[pi]|``
* m = 3:  ``M3(pi) = sqrt([dx pi]^2 + [dy pi]^2) + (-disc pi / ||pi||)_+^(1/3) * Id``

where ``[.]`` is the quadratic-form bracket, ``|.|`` / ``sqrt`` act on
eigenvalues and ``(l)_+ = max(l, 0)``.  A pointwise field is obtained from
the degree-m Taylor term ``pi_z`` of a function f:

    H(z) = lam * det(M_m(pi_z))^(-1/(2m)) * M_m(pi_z)

with an additive isotropic floor regularizing vanishing or univariate
``pi_z`` (see :class:`MetricField`).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import spd2
from .poly2d import HomPoly, disc, gradient, sup_norm
from .spd2 import DomainError, SymMat2, bracket, matrix_abs, matrix_sqrt

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class TaylorJet:
    """All partial derivatives of f at a point, up to the given order.

    ``derivs[(k, l)]`` holds d^(k+l) f / dx^k dy^l evaluated at ``z``.
    """

    order: int
    z: tuple
    derivs: dict

    def __post_init__(self):
        object.__setattr__(self, "z", (float(self.z[0]), float(self.z[1])))
        expected = {(k, l) for k in range(self.order + 1) for l in range(self.order + 1 - k)}
        if set(self.derivs.keys()) != expected:
            raise ValueError(f"jet of order {self.order} must provide exactly {sorted(expected)}")


def _hom_coeffs_from_top_derivs(order, top):
    """Stored (a, b, c[, d]) of the degree-m Taylor term, from the order-m derivatives.

    ``top`` maps (k, l) with k + l = m to the derivative value; entries may be
    numpy arrays (broadcast elementwise).
    """
    if order == 2:
        return (top[(2, 0)] / 2.0, top[(1, 1)] / 2.0, top[(0, 2)] / 2.0)
    return (top[(3, 0)] / 6.0, top[(2, 1)] / 6.0, top[(1, 2)] / 6.0, top[(0, 3)] / 6.0)


def taylor_hom(jet: TaylorJet) -> HomPoly:
    """Degree-m homogeneous Taylor term pi_z = sum_{k+l=m} f_{kl}(z) x^k y^l / (k! l!)."""
    m = jet.order
    if m not in (2, 3):
        raise ValueError(f"jet order must be 2 or 3, got {m}")
    top = {kl: v for kl, v in jet.derivs.items() if sum(kl) == m}
    return HomPoly(m, _hom_coeffs_from_top_derivs(m, top))


def metric_p1(pi: HomPoly) -> SymMat2:
    """||pi|| * |[pi]| for degree-2 pi; positive semidefinite, SPD iff [pi] is nonsingular."""
    if pi.degree != 2:
        raise ValueError("metric_p1 requires a degree-2 polynomial")
    return matrix_abs(bracket(pi)).scaled(sup_norm(pi))


def metric_p2(pi: HomPoly) -> SymMat2:
    """sqrt([dx pi]^2 + [dy pi]^2) + (-disc pi / ||pi||)_+^(1/3) Id for degree-3 pi."""
    if pi.degree != 3:
        raise ValueError("metric_p2 requires a degree-3 polynomial")
    norm = sup_norm(pi)
    if norm == 0.0:
        raise DomainError("metric_p2 is undefined for the zero polynomial")
    g = gradient(pi)
    bx = SymMat2(*g.gx)
    by = SymMat2(*g.gy)
    sq = _sym_square(bx).add(_sym_square(by))
    root = matrix_sqrt(sq)
    lam = max(-disc(pi), 0.0) / norm
    shift = lam ** (1.0 / 3.0)
    return SymMat2(root.m11 + shift, root.m12, root.m22 + shift)


def _sym_square(B: SymMat2) -> SymMat2:
    p, q, r = B.m11, B.m12, B.m22
    return SymMat2(p * p + q * q, q * (p + r), q * q + r * r)


class _CallableJets:
    """Adapter turning a scalar jet provider z -> TaylorJet into a batch source."""

    def __init__(self, fn):
        self._fn = fn

    def hom_coeffs(self, points, m):
        rows = []
        for z in np.asarray(points, dtype=float):
            jet = self._fn(z)
            if jet.order != m:
                raise ValueError(f"jet provider returned order {jet.order}, expected {m}")
            top = {kl: v for kl, v in jet.derivs.items() if sum(kl) == m}
            rows.append(_hom_coeffs_from_top_derivs(m, top))
        return np.array(rows, dtype=float).reshape(len(rows), m + 1)


@dataclass(frozen=True)
class MetricField:
    """Pointwise SPD metric H(z) built from the degree-m Taylor term of a function.

    Evaluation regularizes M = M_m(pi_z) by M <- M + (eps_reg * lmax(M) +
    eps_reg^2) Id, which caps the eigenvalue ratio at 1/eps_reg + 1 and keeps
    H continuous and SPD where pi_z vanishes or is univariate; the
    determinant-power scaling and lam are applied afterwards.  With
    ``isotropic=True`` the regularized matrix is replaced by lmax * Id before
    the determinant scaling (isotropic-adaptation baseline).
    """

    source: object
    m: int
    lam: float
    eps_reg: float
    isotropic: bool = False

    def __post_init__(self):
        if self.m not in (2, 3):
            raise ValueError("m must be 2 or 3")
        if not self.lam > 0.0:
            raise ValueError("lam must be positive")
        if not 0.0 < self.eps_reg < 1.0:
            raise ValueError("eps_reg must lie in (0, 1)")

    def with_lambda(self, lam: float) -> "MetricField":
        return replace(self, lam=lam)

    def tensor_batch(self, points):
        """Entries (m11, m12, m22) of H at each row of ``points``, shape (N, 3)."""
        P = np.atleast_2d(np.asarray(points, dtype=float))
        coeffs = self.source.hom_coeffs(P, self.m)
        m11, m12, m22 = _metric_entries_batch(coeffs, self.m)
        lmax, _, _ = spd2.eig_batch(m11, m12, m22)
        floor = self.eps_reg * np.maximum(lmax, 0.0) + self.eps_reg**2
        m11 = m11 + floor
        m22 = m22 + floor
        if self.isotropic:
            lmax, _, _ = spd2.eig_batch(m11, m12, m22)
            m11 = lmax
            m22 = lmax.copy()
            m12 = np.zeros_like(lmax)
        det = m11 * m22 - m12 * m12
        factor = self.lam * det ** (-1.0 / (2.0 * self.m))
        return np.stack([m11 * factor, m12 * factor, m22 * factor], axis=-1)

    def tensor(self, z) -> SymMat2:
        row = self.tensor_batch(np.asarray(z, dtype=float).reshape(1, 2))[0]
        return SymMat2(row[0], row[1], row[2])

    def __call__(self, z) -> SymMat2:
        return self.tensor(z)


def metric_field(jets, m: int, lam: float, eps_reg: float, isotropic: bool = False) -> MetricField:
    """Build a MetricField from either a batch jet source or a scalar z -> TaylorJet callable."""
    source = jets if hasattr(jets, "hom_coeffs") else _CallableJets(jets)
    return MetricField(source=source, m=m, lam=lam, eps_reg=eps_reg, isotropic=isotropic)


def _metric_entries_batch(coeffs, m):
    """Raw (unregularized) M_m entries for coefficient rows; zero rows give zeros."""
    if m == 2:
        a, b, c = coeffs[:, 0], coeffs[:, 1], coeffs[:, 2]
        # degree-2 sup norm equals the spectral norm of the bracket
        # (matches the sampled norm; cross-tested against metric_p1)
        mid = 0.5 * (a + c)
        rad = np.hypot(0.5 * (a - c), b)
        norm = np.abs(mid) + rad
        l1, l2, theta = spd2.eig_batch(a, b, c)
        e11, e12, e22 = spd2.rebuild_batch(np.abs(l1), np.abs(l2), theta)
        return norm * e11, norm * e12, norm * e22
    a, b, c, d = coeffs[:, 0], coeffs[:, 1], coeffs[:, 2], coeffs[:, 3]
    sq = []
    for p, q, r in ((3 * a, 3 * b, 3 * c), (3 * b, 3 * c, 3 * d)):
        sq.append((p * p + q * q, q * (p + r), q * q + r * r))
    s11 = sq[0][0] + sq[1][0]
    s12 = sq[0][1] + sq[1][1]
    s22 = sq[0][2] + sq[1][2]
    e11, e12, e22 = spd2.sqrt_psd_batch(s11, s12, s22)
    dsc = 4.0 * (a * c - b * b) * (b * d - c * c) - (a * d - b * c) ** 2
    norm = _sup_norm_batch3(a, b, c, d)
    shift = np.where(norm > 0.0, np.cbrt(np.maximum(-dsc, 0.0) / np.where(norm > 0.0, norm, 1.0)), 0.0)
    return e11 + shift, e12, e22 + shift


def _sup_norm_batch3(a, b, c, d, n_scan=256, iters=60):
    """Lockstep circle-scan + golden refinement of ||pi|| for degree-3 rows."""
    t = np.linspace(0.0, 2.0 * np.pi, n_scan, endpoint=False)
    ct, st = np.cos(t), np.sin(t)
    basis = np.stack([ct**3, 3.0 * ct * ct * st, 3.0 * ct * st * st, st**3])
    vals = np.abs(np.stack([a, b, c, d], axis=-1) @ basis)
    idx = np.argmax(vals, axis=-1)
    best = np.take_along_axis(vals, idx[..., None], axis=-1)[..., 0]
    step = 2.0 * np.pi / n_scan

    def f(tt):
        ct, st = np.cos(tt), np.sin(tt)
        return np.abs(a * ct**3 + 3.0 * b * ct * ct * st + 3.0 * c * ct * st * st + d * st**3)

    lo = t[idx] - step
    hi = t[idx] + step
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        take_hi = f1 < f2  # maximum lies in [x1, hi]
        lo = np.where(take_hi, x1, lo)
        hi = np.where(take_hi, hi, x2)
        span = hi - lo
        x1n = np.where(take_hi, x2, hi - _GOLDEN * span)
        x2n = np.where(take_hi, lo + _GOLDEN * span, x1)
        probe = np.where(take_hi, x2n, x1n)
        fp = f(probe)
        f1n = np.where(take_hi, f2, fp)
        f2n = np.where(take_hi, fp, f1)
        x1, x2, f1, f2 = x1n, x2n, f1n, f2n
    return np.maximum(best, np.maximum(f1, f2))


class SyntheticFunction:
    """Demo function tanh(10 (sin(5 y) - 2 x)) + x^2 y + y^3 with closed-form jets.

    Finite differences of the tanh front lose too many digits near the
    transition, so every derivative up to order 3 is written out by chain
    rule; all methods broadcast over numpy arrays.
    """

    def value(self, x, y):
        return np.tanh(10.0 * (np.sin(5.0 * y) - 2.0 * x)) + x * x * y + y**3

    def gradient(self, x, y):
        t = np.tanh(10.0 * (np.sin(5.0 * y) - 2.0 * x))
        t1 = 1.0 - t * t
        gy = 50.0 * np.cos(5.0 * y)
        return -20.0 * t1 + 2.0 * x * y, t1 * gy + x * x + 3.0 * y * y

    def derivs(self, x, y, order):
        """All partials up to ``order`` as a dict {(k, l): array}."""
        if order not in (2, 3):
            raise ValueError("order must be 2 or 3")
        t = np.tanh(10.0 * (np.sin(5.0 * y) - 2.0 * x))
        t1 = 1.0 - t * t
        t2 = -2.0 * t * t1
        t3 = t1 * (4.0 * t * t - 2.0 * t1)
        gy = 50.0 * np.cos(5.0 * y)
        gyy = -250.0 * np.sin(5.0 * y)
        gyyy = -1250.0 * np.cos(5.0 * y)
        out = {
            (0, 0): t + x * x * y + y**3,
            (1, 0): -20.0 * t1 + 2.0 * x * y,
            (0, 1): t1 * gy + x * x + 3.0 * y * y,
            (2, 0): 400.0 * t2 + 2.0 * y,
            (1, 1): -20.0 * t2 * gy + 2.0 * x,
            (0, 2): t2 * gy * gy + t1 * gyy + 6.0 * y,
        }
        if order == 3:
            out[(3, 0)] = -8000.0 * t3
            out[(2, 1)] = 400.0 * t3 * gy + 2.0
            out[(1, 2)] = -20.0 * (t3 * gy * gy + t2 * gyy)
            out[(0, 3)] = t3 * gy**3 + 3.0 * t2 * gy * gyy + t1 * gyyy + 6.0
        return out

    def hom_coeffs(self, points, m):
        P = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.derivs(P[:, 0], P[:, 1], m)
        top = {kl: v for kl, v in d.items() if sum(kl) == m}
        return np.stack(_hom_coeffs_from_top_derivs(m, top), axis=-1)

    def jet(self, z, m) -> TaylorJet:
        z = np.asarray(z, dtype=float)
        d = self.derivs(np.array([z[0]]), np.array([z[1]]), m)
        return TaylorJet(order=m, z=(z[0], z[1]), derivs={kl: float(v[0]) for kl, v in d.items()})


SYNTHETIC = SyntheticFunction()


def synthetic_jet(z, m: int) -> TaylorJet:
    """Analytic Taylor jet of the demo function at z, up to order m."""
    return SYNTHETIC.jet(z, m)
