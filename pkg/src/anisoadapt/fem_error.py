"""Triangles, shape matrices, Lagrange P1/P2 interpolation and H1 errors.

The shape matrix of a triangle T with vertices v1, v2, v3 and barycenter
z_T = (v1 + v2 + v3)/3 is the SPD matrix H_T with

    H_T^{-1} = (2/3) * sum_i (v_i - z_T)(v_i - z_T)^T.

It satisfies |T| * sqrt(det H_T) = |T_eq| where T_eq is the equilateral
triangle inscribed in the unit circle (H_{T_eq} = Id), and transforms as
H_{T'} = A^T H_T A when the linear map z -> A z sends T' onto T.

The averaged H1 interpolation error of degree m is

    e_T(f)_m^2 = (1/|T|) int_T |grad(f - I_T^{m-1} f)|^2,

with I_T^{m-1} the Lagrange interpolant of degree m - 1 (vertices for P1,
vertices plus edge midpoints for P2).  e_M(pi)_m is the supremum of e_T
over all triangles with H_T = M; by the mapping onto T_eq that family is a
single rotation orbit, scanned over theta in [0, 2*pi/3).

All quadrature rules are symmetric, given in barycentric coordinates with
weights summing to 1, hence usable on any physical triangle directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .poly2d import HomPoly, gradient
from .spd2 import DomainError, SymMat2, matrix_power

_DEG_TOL = 1e-14


@dataclass(frozen=True)
class Triangle:
    """Three counterclockwise vertices, stored as a (3, 2) array."""

    verts: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.verts, dtype=float)
        if v.shape != (3, 2):
            raise ValueError("Triangle needs a (3, 2) vertex array")
        object.__setattr__(self, "verts", v)
        if self.signed_area <= 0.0:
            raise ValueError("vertices must be counterclockwise with positive area")

    @property
    def signed_area(self):
        v = self.verts
        return 0.5 * float(np.cross(v[1] - v[0], v[2] - v[0]))

    @property
    def area(self):
        return self.signed_area

    @property
    def barycenter(self):
        return self.verts.mean(axis=0)

    @property
    def diameter(self):
        v = self.verts
        return float(max(np.linalg.norm(v[i] - v[j]) for i, j in ((0, 1), (1, 2), (2, 0))))

    def translated(self, t):
        return Triangle(self.verts + np.asarray(t, dtype=float))


_T_EQ_ANGLES = 2.0 * np.pi * np.arange(3) / 3.0
T_EQ = Triangle(np.stack([np.cos(_T_EQ_ANGLES), np.sin(_T_EQ_ANGLES)], axis=-1))
T_EQ_AREA = T_EQ.area  # 3*sqrt(3)/4


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points and area-normalized weights, exact up to `exactness`."""

    points: np.ndarray  # (n, 3)
    weights: np.ndarray  # (n,), sums to 1
    exactness: int


def _orbit3(a):
    return [(1 - 2 * a, a, a), (a, 1 - 2 * a, a), (a, a, 1 - 2 * a)]


def _orbit6(a, b):
    c = 1 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


def _make_rule(exactness, pts, ws):
    return QuadratureRule(np.array(pts, dtype=float), np.array(ws, dtype=float), exactness)


_RULE_2 = _make_rule(2, _orbit3(1.0 / 6.0), [1.0 / 3.0] * 3)

_RULE_4 = _make_rule(
    4,
    _orbit3(0.445948490915965) + _orbit3(0.091576213509771),
    [0.223381589678011] * 3 + [0.109951743655322] * 3,
)

# symmetric 16-point rule, coefficients solved to machine precision against
# the exact barycentric moments 2 p! q! / (p+q+2)!
_RULE_8 = _make_rule(
    8,
    [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)]
    + _orbit3(0.4592925882927051)
    + _orbit3(0.17056930775173718)
    + _orbit3(0.05054722831703296)
    + _orbit6(0.2631128296347139, 0.00839477740991666),
    [0.14431560767775936]
    + [0.09509163426730186] * 3
    + [0.10321737053473298] * 3
    + [0.03245849762320219] * 3
    + [0.02723031417442159] * 6,
)

_RULES = (_RULE_2, _RULE_4, _RULE_8)


def quadrature_rule(exactness: int) -> QuadratureRule:
    """Smallest stored symmetric rule exact for the requested polynomial degree."""
    for rule in _RULES:
        if rule.exactness >= exactness:
            return rule
    raise ValueError(f"no quadrature rule of exactness {exactness} available")


def shape_matrix(T: Triangle) -> SymMat2:
    """SPD matrix H_T with H_T^{-1} = (2/3) sum (v_i - z_T)(v_i - z_T)^T."""
    if T.area <= _DEG_TOL * T.diameter**2:
        raise DomainError("degenerate triangle has no shape matrix")
    d = T.verts - T.barycenter
    i11 = (2.0 / 3.0) * float(np.sum(d[:, 0] * d[:, 0]))
    i12 = (2.0 / 3.0) * float(np.sum(d[:, 0] * d[:, 1]))
    i22 = (2.0 / 3.0) * float(np.sum(d[:, 1] * d[:, 1]))
    det = i11 * i22 - i12 * i12
    return SymMat2(i22 / det, -i12 / det, i11 / det)


def shape_matrices_batch(verts):
    """Entries (h11, h12, h22) of H_T for a (B, 3, 2) vertex array."""
    v = np.asarray(verts, dtype=float)
    d = v - v.mean(axis=1, keepdims=True)
    i11 = (2.0 / 3.0) * np.sum(d[:, :, 0] ** 2, axis=1)
    i12 = (2.0 / 3.0) * np.sum(d[:, :, 0] * d[:, :, 1], axis=1)
    i22 = (2.0 / 3.0) * np.sum(d[:, :, 1] ** 2, axis=1)
    det = i11 * i22 - i12 * i12
    return i22 / det, -i12 / det, i11 / det


def _rotation_t(theta):
    """U_theta^T for the proper rotation U_theta by angle theta."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def triangle_from_shape(M: SymMat2, theta: float, z=(0.0, 0.0)) -> Triangle:
    """Triangle with shape matrix M: vertices z + M^{-1/2} U_theta^T v_eq."""
    A = matrix_power(M, -0.5).as_array() @ _rotation_t(theta)
    return Triangle(np.asarray(z, dtype=float) + T_EQ.verts @ A.T)


def lagrange_nodes(T: Triangle, degree: int):
    """P1 nodes are the vertices; P2 adds the edge midpoints (v1v2, v2v3, v3v1)."""
    v = T.verts
    if degree == 1:
        return v.copy()
    if degree == 2:
        mids = 0.5 * (v + np.roll(v, -1, axis=0))
        return np.vstack([v, mids])
    raise ValueError(f"unsupported Lagrange degree {degree}")


@dataclass(frozen=True)
class TriPoly:
    """Bivariate polynomial of degree <= 2: c0 + cx x + cy y + cxx x^2 + cxy xy + cyy y^2."""

    c0: float = 0.0
    cx: float = 0.0
    cy: float = 0.0
    cxx: float = 0.0
    cxy: float = 0.0
    cyy: float = 0.0

    def value(self, x, y):
        return self.c0 + self.cx * x + self.cy * y + self.cxx * x * x + self.cxy * x * y + self.cyy * y * y

    def __call__(self, x, y):
        return self.value(x, y)

    def gradient(self, x, y):
        gx = self.cx + 2.0 * self.cxx * x + self.cxy * y
        gy = self.cy + self.cxy * x + 2.0 * self.cyy * y
        return gx, gy

    def coeffs(self):
        return (self.c0, self.cx, self.cy, self.cxx, self.cxy, self.cyy)


def _affine_product(u, v):
    """(u0 + u1 x + u2 y)(v0 + v1 x + v2 y) as TriPoly coefficients."""
    return TriPoly(
        u[0] * v[0],
        u[0] * v[1] + u[1] * v[0],
        u[0] * v[2] + u[2] * v[0],
        u[1] * v[1],
        u[1] * v[2] + u[2] * v[1],
        u[2] * v[2],
    )


def _add(p: TriPoly, q: TriPoly, s=1.0) -> TriPoly:
    return TriPoly(*(a + s * b for a, b in zip(p.coeffs(), q.coeffs())))


def _scale(p: TriPoly, s) -> TriPoly:
    return TriPoly(*(s * c for c in p.coeffs()))


def _barycentric_forms(T: Triangle):
    """Affine coefficient rows (alpha_i, beta_i, gamma_i) of the barycentric functions."""
    v = T.verts
    A3 = np.column_stack([np.ones(3), v[:, 0], v[:, 1]])
    return np.linalg.inv(A3).T


def interpolate(T: Triangle, values, degree: int) -> TriPoly:
    """Unique polynomial of degree <= `degree` matching the nodal values on T."""
    values = np.asarray(values, dtype=float)
    n_nodes = 3 if degree == 1 else 6
    if degree not in (1, 2):
        raise ValueError(f"unsupported Lagrange degree {degree}")
    if values.shape != (n_nodes,):
        raise ValueError(f"degree {degree} needs {n_nodes} nodal values")
    lam = _barycentric_forms(T)
    out = TriPoly()
    if degree == 1:
        for i in range(3):
            out = _add(out, TriPoly(lam[i, 0], lam[i, 1], lam[i, 2]), values[i])
        return out
    for i in range(3):
        # vertex basis lam_i (2 lam_i - 1)
        basis = _add(_scale(_affine_product(lam[i], lam[i]), 2.0), TriPoly(*lam[i]), -1.0)
        out = _add(out, basis, values[i])
    for e, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        # edge basis 4 lam_i lam_j
        out = _add(out, _scale(_affine_product(lam[i], lam[j]), 4.0), values[3 + e])
    return out


class _PolyField:
    """Field adapter for a homogeneous polynomial (value + analytic gradient)."""

    def __init__(self, pi: HomPoly):
        self.pi = pi
        self._grad = gradient(pi)

    def value(self, x, y):
        return self.pi(x, y)

    def gradient(self, x, y):
        return self._grad(x, y)


def as_field(f):
    """Accept a HomPoly, TriPoly, or any object exposing value/gradient."""
    if isinstance(f, HomPoly):
        return _PolyField(f)
    if hasattr(f, "value") and hasattr(f, "gradient"):
        return f
    raise TypeError("f must be a HomPoly or expose .value(x, y) and .gradient(x, y)")


def _is_polynomial(f):
    return isinstance(f, (HomPoly, TriPoly, _PolyField))


def h1_error_sq_batch(verts, field, fe_degree: int, rule: QuadratureRule):
    """Area-averaged squared H1 interpolation error for a (B, 3, 2) batch of triangles."""
    v = np.asarray(verts, dtype=float)
    two_area = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    edges = np.stack([v[:, 1] - v[:, 2], v[:, 2] - v[:, 0], v[:, 0] - v[:, 1]], axis=1)
    perp = np.stack([edges[:, :, 1], -edges[:, :, 0]], axis=-1)
    grad_lam = perp / two_area[:, None, None]  # (B, 3, 2)

    if fe_degree == 1:
        nodes = v
    else:
        nodes = np.concatenate([v, 0.5 * (v + np.roll(v, -1, axis=1))], axis=1)
    vals = field.value(nodes[:, :, 0], nodes[:, :, 1])  # (B, n)

    bary = rule.points  # (nq, 3)
    qpts = np.einsum("qi,bid->bqd", bary, v)  # (B, nq, 2)

    if fe_degree == 1:
        gi = np.einsum("bn,bnd->bd", vals, grad_lam)[:, None, :]
        gi = np.broadcast_to(gi, (v.shape[0], bary.shape[0], 2))
    else:
        gi = np.einsum("bi,qi,bid->bqd", vals[:, :3], 4.0 * bary - 1.0, grad_lam)
        for e, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
            shape_grad = 4.0 * (
                bary[None, :, j, None] * grad_lam[:, None, i, :]
                + bary[None, :, i, None] * grad_lam[:, None, j, :]
            )
            gi = gi + vals[:, 3 + e, None, None] * shape_grad

    fx, fy = field.gradient(qpts[:, :, 0], qpts[:, :, 1])
    dx = fx - gi[:, :, 0]
    dy = fy - gi[:, :, 1]
    return (dx * dx + dy * dy) @ rule.weights


def _rule_for(f, m: int) -> QuadratureRule:
    # polynomial error gradients have degree <= m-1, squared <= 2(m-1)
    return quadrature_rule(max(2, 2 * (m - 1)) if _is_polynomial(f) else 8)


def interp_error_h1(T: Triangle, f, m: int) -> float:
    """Averaged H1 error of the degree-(m-1) Lagrange interpolant of f on T."""
    if m not in (2, 3):
        raise ValueError("m must be 2 or 3")
    field = as_field(f)
    rule = _rule_for(f, m)
    e2 = h1_error_sq_batch(T.verts[None, :, :], field, m - 1, rule)[0]
    return float(np.sqrt(max(e2, 0.0)))


def _family_errors(M: SymMat2, pi: HomPoly, m: int, thetas):
    A0 = matrix_power(M, -0.5).as_array()
    c, s = np.cos(thetas), np.sin(thetas)
    rot_t = np.empty((len(thetas), 2, 2))
    rot_t[:, 0, 0] = c
    rot_t[:, 0, 1] = s
    rot_t[:, 1, 0] = -s
    rot_t[:, 1, 1] = c
    A = np.einsum("ij,njk->nik", A0, rot_t)
    verts = np.einsum("nij,kj->nki", A, T_EQ.verts)
    field = _PolyField(pi)
    rule = quadrature_rule(max(2, 2 * (m - 1)))
    return h1_error_sq_batch(verts, field, m - 1, rule)


_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def sup_error_over_shape(M: SymMat2, pi: HomPoly, m: int, n_scan: int = 256) -> float:
    """e_M(pi)_m: max of e_T(pi)_m over triangles with H_T = M.

    Every such triangle is a rotation image of the mapped T_eq (up to a
    translation, which leaves the error of a homogeneous polynomial
    unchanged), so the supremum is a scan over theta in [0, 2*pi/3)
    followed by golden-section refinement; relative accuracy ~1e-8.
    """
    if pi.degree != m:
        raise ValueError("degree of pi must equal m")
    if not M.is_spd():
        raise DomainError("shape matrix must be symmetric positive definite")
    period = 2.0 * np.pi / 3.0
    thetas = np.linspace(0.0, period, n_scan, endpoint=False)
    e2 = _family_errors(M, pi, m, thetas)
    i = int(np.argmax(e2))
    step = period / n_scan

    def f(t):
        return float(_family_errors(M, pi, m, np.array([t]))[0])

    lo, hi = thetas[i] - step, thetas[i] + step
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(60):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
    best = max(float(e2[i]), f1, f2)
    return float(np.sqrt(max(best, 0.0)))


def _kahan_sum(values):
    total = 0.0
    comp = 0.0
    for v in values:
        y = float(v) - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def mesh_error(mesh, f, fe_degree: int) -> float:
    """Global H1-seminorm interpolation error ||grad(f - I_T f)||_L2 over a mesh.

    Per-triangle integrals are accumulated with compensated summation in
    triangle-index order, so the result is deterministic.
    """
    if fe_degree not in (1, 2):
        raise ValueError("fe_degree must be 1 or 2")
    verts = mesh.vertices[mesh.triangles]  # (B, 3, 2)
    two_area = np.cross(verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0])
    diam2 = np.max(np.sum((verts - np.roll(verts, 1, axis=1)) ** 2, axis=2), axis=1)
    bad = np.nonzero(two_area <= 2.0 * _DEG_TOL * diam2)[0]
    if bad.size:
        raise ValueError(f"triangle {int(bad[0])} is degenerate or inverted")
    field = as_field(f)
    rule = _rule_for(f, fe_degree + 1)
    e2 = h1_error_sq_batch(verts, field, fe_degree, rule)
    contributions = 0.5 * two_area * e2
    return float(np.sqrt(max(_kahan_sum(contributions), 0.0)))
