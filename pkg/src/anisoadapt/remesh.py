"""Metric-conforming local remeshing on axis-aligned rectangle domains.

The adaptation loop drives every edge toward unit length in the Riemannian
metric H: passes of (1) splitting edges longer than sqrt(2) at their metric
midpoint, (2) collapsing edges shorter than 1/sqrt(2) when no inversion or
boundary violation results, (3) flipping an interior edge when it is the
worst edge of its quad and the opposite diagonal deviates less from unit
length, and (4) metric-weighted Laplacian smoothing of interior vertices
with an inversion guard.  Everything is processed in sorted index order, so
the result is deterministic.

Vertex references: 0 = interior, 1..4 = boundary segment (bottom, right,
top, left of the rectangle), 5 = corner.  Boundary vertices only move along
their segment; the four corners never move or collapse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optimal_metric import MetricField

INTERIOR, BOTTOM, RIGHT, TOP, LEFT, CORNER = 0, 1, 2, 3, 4, 5

SPLIT_THRESHOLD = np.sqrt(2.0) * (1.0 + 1e-9)
COLLAPSE_THRESHOLD = 1.0 / np.sqrt(2.0) * (1.0 - 1e-9)

_GAUSS_OFFSET = 0.5 / np.sqrt(3.0)
_AREA_TOL = 1e-14


@dataclass
class Mesh:
    """Conforming triangulation: CCW triangles, per-vertex boundary references."""

    vertices: np.ndarray  # (N, 2) float
    triangles: np.ndarray  # (M, 3) int, counterclockwise
    vertex_ref: np.ndarray  # (N,) int, see module constants

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.vertex_ref = np.asarray(self.vertex_ref, dtype=np.int64).reshape(-1)
        if len(self.vertex_ref) != len(self.vertices):
            raise ValueError("vertex_ref length must match vertices")

    @property
    def n_triangles(self):
        return len(self.triangles)

    def copy(self):
        return Mesh(self.vertices.copy(), self.triangles.copy(), self.vertex_ref.copy())

    def edge_set(self):
        """Unique undirected edges as sorted index pairs."""
        t = self.triangles
        pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        pairs.sort(axis=1)
        return np.unique(pairs, axis=0)

    def signed_areas(self):
        v = self.vertices[self.triangles]
        return 0.5 * np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])

    def rect(self):
        """Axis-aligned bounding rectangle (xmin, xmax, ymin, ymax)."""
        return (
            float(self.vertices[:, 0].min()),
            float(self.vertices[:, 0].max()),
            float(self.vertices[:, 1].min()),
            float(self.vertices[:, 1].max()),
        )

    def validate(self):
        """Check conformity, orientation and boundary-tag consistency; raise on failure."""
        if self.triangles.min(initial=0) < 0 or self.triangles.max(initial=-1) >= len(self.vertices):
            raise ValueError("triangle index out of range")
        areas = self.signed_areas()
        if np.any(areas <= 0.0):
            raise ValueError(f"triangle {int(np.argmin(areas))} is degenerate or inverted")
        directed = {}
        for ti, (i, j, k) in enumerate(self.triangles):
            for a, b in ((i, j), (j, k), (k, i)):
                if (a, b) in directed:
                    raise ValueError(f"directed edge ({a}, {b}) appears twice (triangle {ti})")
                directed[(a, b)] = ti
        boundary = set()
        for (a, b) in directed:
            if (b, a) not in directed:
                boundary.add(a)
                boundary.add(b)
        refs = self.vertex_ref
        for v in boundary:
            if refs[v] == INTERIOR:
                raise ValueError(f"boundary vertex {v} tagged interior")
        xmin, xmax, ymin, ymax = self.rect()
        tol = 1e-9 * max(xmax - xmin, ymax - ymin)
        lines = {
            BOTTOM: ("y", ymin),
            RIGHT: ("x", xmax),
            TOP: ("y", ymax),
            LEFT: ("x", xmin),
        }
        corners = {(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)}
        for v, ref in enumerate(refs):
            x, y = self.vertices[v]
            if ref in lines:
                axis, val = lines[ref]
                coord = y if axis == "y" else x
                if abs(coord - val) > tol:
                    raise ValueError(f"vertex {v} left its boundary segment {ref}")
            elif ref == CORNER:
                if not any(abs(x - cx) <= tol and abs(y - cy) <= tol for cx, cy in corners):
                    raise ValueError(f"corner vertex {v} is not at a rectangle corner")


def uniform_mesh(rect, n: int) -> Mesh:
    """Structured n x n grid of the rectangle split into 2 n^2 CCW triangles."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xmin, xmax, ymin, ymax = map(float, rect)
    xs = np.linspace(xmin, xmax, n + 1)
    ys = np.linspace(ymin, ymax, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(ix, iy):
        return iy * (n + 1) + ix

    tris = []
    for iy in range(n):
        for ix in range(n):
            v00, v10 = vid(ix, iy), vid(ix + 1, iy)
            v01, v11 = vid(ix, iy + 1), vid(ix + 1, iy + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))

    refs = np.zeros(len(vertices), dtype=np.int64)
    for iy in range(n + 1):
        for ix in range(n + 1):
            on_x = ix in (0, n)
            on_y = iy in (0, n)
            if on_x and on_y:
                refs[vid(ix, iy)] = CORNER
            elif on_y:
                refs[vid(ix, iy)] = BOTTOM if iy == 0 else TOP
            elif on_x:
                refs[vid(ix, iy)] = LEFT if ix == 0 else RIGHT
    return Mesh(vertices, np.array(tris, dtype=np.int64), refs)


def _lengths_batch(field: MetricField, P, Q):
    """Metric lengths of segments [P_i, Q_i] by the 2-point Gauss rule."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    d = Q - P
    mid = 0.5 * (P + Q)
    g1 = mid - _GAUSS_OFFSET * d
    g2 = mid + _GAUSS_OFFSET * d
    out = 0.0
    for g in (g1, g2):
        t = field.tensor_batch(g)
        quad = t[:, 0] * d[:, 0] ** 2 + 2.0 * t[:, 1] * d[:, 0] * d[:, 1] + t[:, 2] * d[:, 1] ** 2
        out = out + np.sqrt(np.maximum(quad, 0.0))
    return 0.5 * out


def metric_edge_length(p, q, field: MetricField) -> float:
    """|q - p| in the metric: mean of the quadratic-form length at the two Gauss points."""
    return float(_lengths_batch(field, np.asarray(p, float)[None], np.asarray(q, float)[None])[0])


def _density(field: MetricField, P, d):
    """sqrt(d^T H(P) d) at given points, for the metric-midpoint weighting."""
    t = field.tensor_batch(P)
    quad = t[:, 0] * d[:, 0] ** 2 + 2.0 * t[:, 1] * d[:, 0] * d[:, 1] + t[:, 2] * d[:, 1] ** 2
    return np.sqrt(np.maximum(quad, 0.0))


def _metric_midpoint_t(field: MetricField, P, Q):
    """Parameter t* in (0, 1) splitting [P, Q] into halves of equal metric length.

    Uses the linear-density model rho(t) = rho0 + (rho1 - rho0) t, whose
    equal-mass point is (-rho0 + sqrt((rho0^2 + rho1^2)/2)) / (rho1 - rho0).
    """
    d = Q - P
    rho0 = _density(field, P, d)
    rho1 = _density(field, Q, d)
    delta = rho1 - rho0
    small = np.abs(delta) <= 1e-12 * (rho0 + rho1 + 1e-300)
    safe_delta = np.where(small, 1.0, delta)
    t = (-rho0 + np.sqrt(0.5 * (rho0**2 + rho1**2))) / safe_delta
    t = np.where(small, 0.5, t)
    return np.clip(t, 0.2, 0.8)


class _Editor:
    """Mutable half-structure for local remeshing; compacted back to Mesh at the end."""

    def __init__(self, mesh: Mesh):
        self.V = [mesh.vertices[i].copy() for i in range(len(mesh.vertices))]
        self.ref = list(int(r) for r in mesh.vertex_ref)
        self.T = [tuple(int(v) for v in t) for t in mesh.triangles]
        self.alive = [True] * len(self.T)
        self.edge_map = {}
        self.v2t = {}
        for ti in range(len(self.T)):
            self._index_triangle(ti)
        self.rect = mesh.rect()

    # -- topology bookkeeping ------------------------------------------------

    def _index_triangle(self, ti):
        i, j, k = self.T[ti]
        for a, b in ((i, j), (j, k), (k, i)):
            self.edge_map.setdefault((min(a, b), max(a, b)), set()).add(ti)
        for v in (i, j, k):
            self.v2t.setdefault(v, set()).add(ti)

    def _unindex_triangle(self, ti):
        i, j, k = self.T[ti]
        for a, b in ((i, j), (j, k), (k, i)):
            key = (min(a, b), max(a, b))
            tris = self.edge_map.get(key)
            if tris is not None:
                tris.discard(ti)
                if not tris:
                    del self.edge_map[key]
        for v in (i, j, k):
            tris = self.v2t.get(v)
            if tris is not None:
                tris.discard(ti)
                if not tris:
                    del self.v2t[v]

    def add_vertex(self, xy, ref):
        self.V.append(np.asarray(xy, dtype=float).copy())
        self.ref.append(int(ref))
        return len(self.V) - 1

    def add_triangle(self, i, j, k):
        self.T.append((i, j, k))
        self.alive.append(True)
        self._index_triangle(len(self.T) - 1)

    def remove_triangle(self, ti):
        self._unindex_triangle(ti)
        self.alive[ti] = False

    def neighbors(self, v):
        out = set()
        for ti in self.v2t.get(v, ()):
            for w in self.T[ti]:
                if w != v:
                    out.add(w)
        return out

    def edge_arrays(self):
        edges = sorted(self.edge_map.keys())
        P = np.array([self.V[a] for a, _ in edges])
        Q = np.array([self.V[b] for _, b in edges])
        return edges, P, Q

    def tri_area(self, ti, override=None):
        pts = []
        for v in self.T[ti]:
            if override is not None and v in override:
                pts.append(override[v])
            else:
                pts.append(self.V[v])
        return 0.5 * float(np.cross(pts[1] - pts[0], pts[2] - pts[0]))

    def _area_floor(self, ti, override=None):
        pts = []
        for v in self.T[ti]:
            if override is not None and v in override:
                pts.append(override[v])
            else:
                pts.append(self.V[v])
        d2 = max(float(np.sum((pts[i] - pts[j]) ** 2)) for i, j in ((0, 1), (1, 2), (2, 0)))
        return _AREA_TOL * d2

    # -- boundary geometry ---------------------------------------------------

    def boundary_segment(self, u, v):
        """Which rectangle side the boundary edge (u, v) lies on, or None."""
        xmin, xmax, ymin, ymax = self.rect
        tol = 1e-9 * max(xmax - xmin, ymax - ymin)
        pu, pv = self.V[u], self.V[v]
        if abs(pu[1] - ymin) <= tol and abs(pv[1] - ymin) <= tol:
            return BOTTOM
        if abs(pu[0] - xmax) <= tol and abs(pv[0] - xmax) <= tol:
            return RIGHT
        if abs(pu[1] - ymax) <= tol and abs(pv[1] - ymax) <= tol:
            return TOP
        if abs(pu[0] - xmin) <= tol and abs(pv[0] - xmin) <= tol:
            return LEFT
        return None

    def snap_to_segment(self, pos, segment):
        xmin, xmax, ymin, ymax = self.rect
        pos = pos.copy()
        if segment == BOTTOM:
            pos[1] = ymin
        elif segment == TOP:
            pos[1] = ymax
        elif segment == LEFT:
            pos[0] = xmin
        elif segment == RIGHT:
            pos[0] = xmax
        return pos

    # -- local operations ----------------------------------------------------

    def split(self, edge, pos):
        u, v = edge
        tris = sorted(self.edge_map.get(edge, ()))
        if not tris:
            return False
        if len(tris) == 1:
            segment = self.boundary_segment(u, v)
            if segment is None:
                return False
            pos = self.snap_to_segment(pos, segment)
            ref = segment
        else:
            ref = INTERIOR
        w = self.add_vertex(pos, ref)
        for ti in tris:
            tri = self.T[ti]
            idx = [tri.index(u), tri.index(v)]
            # directed edge (x, y) of this triangle matching {u, v}
            if (idx[1] - idx[0]) % 3 == 1:
                x, y = u, v
            else:
                x, y = v, u
            z = [t for t in tri if t not in (u, v)][0]
            self.remove_triangle(ti)
            self.add_triangle(x, w, z)
            self.add_triangle(w, y, z)
        return True

    def collapse(self, edge, pos, ref):
        """Merge v into u at position pos; caller has validated the move."""
        u, v = edge
        doomed = sorted(self.edge_map.get(edge, ()))
        ring_v = sorted(set(self.v2t.get(v, ())) - set(doomed))
        for ti in doomed:
            self.remove_triangle(ti)
        for ti in ring_v:
            tri = self.T[ti]
            self._unindex_triangle(ti)
            self.T[ti] = tuple(u if w == v else w for w in tri)
            self._index_triangle(ti)
        self.V[u] = np.asarray(pos, dtype=float).copy()
        self.ref[u] = int(ref)
        return True

    def flip(self, edge):
        tris = sorted(self.edge_map.get(edge, ()))
        if len(tris) != 2:
            return False
        u, v = edge
        t1, t2 = tris
        # orient so that t_a contains the directed edge (u, v)
        tri1 = self.T[t1]
        if (tri1.index(v) - tri1.index(u)) % 3 != 1:
            t1, t2 = t2, t1
        a = [w for w in self.T[t1] if w not in (u, v)][0]
        b = [w for w in self.T[t2] if w not in (u, v)][0]
        self.remove_triangle(t1)
        self.remove_triangle(t2)
        self.add_triangle(u, b, a)
        self.add_triangle(b, v, a)
        return True

    def to_mesh(self) -> Mesh:
        alive = [ti for ti in range(len(self.T)) if self.alive[ti]]
        used = sorted({v for ti in alive for v in self.T[ti]})
        remap = {v: i for i, v in enumerate(used)}
        vertices = np.array([self.V[v] for v in used])
        refs = np.array([self.ref[v] for v in used], dtype=np.int64)
        tris = np.array([[remap[v] for v in self.T[ti]] for ti in alive], dtype=np.int64)
        return Mesh(vertices, tris, refs)


def _split_phase(ed: _Editor, field: MetricField, max_rounds=8):
    count = 0
    for _ in range(max_rounds):
        edges, P, Q = ed.edge_arrays()
        if not edges:
            break
        L = _lengths_batch(field, P, Q)
        idx = np.nonzero(L > SPLIT_THRESHOLD)[0]
        if idx.size == 0:
            break
        ts = _metric_midpoint_t(field, P[idx], Q[idx])
        pos = P[idx] + ts[:, None] * (Q[idx] - P[idx])
        for n, i in enumerate(idx):
            if ed.split(edges[i], pos[n]):
                count += 1
    return count


def _collapse_phase(ed: _Editor, field: MetricField):
    edges, P, Q = ed.edge_arrays()
    if not edges:
        return 0
    L = _lengths_batch(field, P, Q)
    idx = np.nonzero(L < COLLAPSE_THRESHOLD)[0]
    count = 0
    for i in idx:
        edge = edges[i]
        u, v = edge
        tris = ed.edge_map.get(edge)
        if not tris:
            continue  # consumed by an earlier collapse
        ru, rv = ed.ref[u], ed.ref[v]
        if ru == CORNER or rv == CORNER:
            continue
        if ru != rv:
            continue  # only interior-interior or along-segment collapses
        pu, pv = ed.V[u], ed.V[v]
        if metric_edge_length(pu, pv, field) >= COLLAPSE_THRESHOLD:
            continue  # earlier operations stretched it back
        # link condition: shared neighbors must be exactly the opposite vertices
        opposite = {w for ti in tris for w in ed.T[ti] if w not in (u, v)}
        if ed.neighbors(u) & ed.neighbors(v) != opposite:
            continue
        t_mid = float(_metric_midpoint_t(field, pu[None], pv[None])[0])
        pos = pu + t_mid * (pv - pu)
        if ru != INTERIOR:
            segment = ed.boundary_segment(u, v)
            if segment is None or segment != ru:
                continue
            pos = ed.snap_to_segment(pos, segment)
        override = {u: pos, v: pos}
        affected = (set(ed.v2t.get(u, ())) | set(ed.v2t.get(v, ()))) - set(tris)
        ok = all(ed.tri_area(ti, override) > ed._area_floor(ti, override) for ti in sorted(affected))
        if not ok:
            continue
        # reject collapses that would create over-long edges around the merged
        # vertex (keeps collapse and split from fighting across sharp metric
        # contrasts)
        others = sorted((ed.neighbors(u) | ed.neighbors(v)) - {u, v})
        if others:
            W = np.array([ed.V[w] for w in others])
            if np.any(_lengths_batch(field, np.tile(pos, (len(others), 1)), W) > SPLIT_THRESHOLD):
                continue
        ed.collapse(edge, pos, ru)
        count += 1
    return count


def _deviation(L):
    L = max(float(L), 1e-300)
    return max(L, 1.0 / L)


def _flip_phase(ed: _Editor, field: MetricField):
    edges, P, Q = ed.edge_arrays()
    if not edges:
        return 0
    L = _lengths_batch(field, P, Q)
    length_of = {e: float(val) for e, val in zip(edges, L)}
    # gather flip candidates: interior edges with their opposite vertices
    cands = []
    for e in edges:
        tris = ed.edge_map.get(e)
        if not tris or len(tris) != 2:
            continue
        opp = sorted({w for ti in tris for w in ed.T[ti] if w not in e})
        if len(opp) != 2:
            continue
        cands.append((e, (opp[0], opp[1])))
    if not cands:
        return 0
    A = np.array([ed.V[a] for _, (a, b) in cands])
    B = np.array([ed.V[b] for _, (a, b) in cands])
    L_new = _lengths_batch(field, A, B)
    count = 0
    for (edge, (a, b)), l_new in zip(cands, L_new):
        tris = ed.edge_map.get(edge)
        if not tris or len(tris) != 2:
            continue
        opp = {w for ti in tris for w in ed.T[ti] if w not in edge}
        if opp != {a, b}:
            continue  # neighborhood changed since gathering
        if (min(a, b), max(a, b)) in ed.edge_map:
            continue
        l_old = length_of.get(edge)
        if l_old is None:
            continue
        dev_old = _deviation(l_old)
        dev_new = _deviation(l_new)
        # the diagonal must be the worst edge of its quad, and the flip must improve it
        outer = []
        u, v = edge
        for x, y in ((u, a), (u, b), (v, a), (v, b)):
            key = (min(x, y), max(x, y))
            if key in length_of:
                outer.append(_deviation(length_of[key]))
        if outer and dev_old < max(outer) - 1e-12:
            continue
        if dev_new >= dev_old - 1e-12:
            continue
        # geometric validity of the flipped pair
        pu, pv, pa, pb = ed.V[u], ed.V[v], ed.V[a], ed.V[b]
        area1 = 0.5 * float(np.cross(pb - pu, pa - pu))
        area2 = 0.5 * float(np.cross(pv - pb, pa - pb))
        scale = _AREA_TOL * max(
            float(np.sum((pu - pv) ** 2)), float(np.sum((pa - pb) ** 2))
        )
        if area1 <= scale or area2 <= scale:
            continue
        if ed.flip(edge):
            length_of[(min(a, b), max(a, b))] = float(l_new)
            count += 1
    return count


def _smooth_phase(ed: _Editor, field: MetricField, sweeps=2, omega=0.5):
    for _ in range(sweeps):
        edges, P, Q = ed.edge_arrays()
        if not edges:
            return
        L = _lengths_batch(field, P, Q)
        weight = {e: max(float(val), 1e-12) for e, val in zip(edges, L)}
        for v in sorted(ed.v2t.keys()):
            if ed.ref[v] != INTERIOR:
                continue
            nbrs = sorted(ed.neighbors(v))
            if not nbrs:
                continue
            wsum = 0.0
            acc = np.zeros(2)
            for w in nbrs:
                wt = weight.get((min(v, w), max(v, w)), 1.0)
                acc += wt * ed.V[w]
                wsum += wt
            target = acc / wsum
            candidate = ed.V[v] + omega * (target - ed.V[v])
            override = {v: candidate}
            ok = all(
                ed.tri_area(ti, override) > ed._area_floor(ti, override)
                for ti in sorted(ed.v2t[v])
            )
            if ok:
                ed.V[v] = candidate


def adapt(mesh: Mesh, field: MetricField, max_passes: int = 30, debug: bool = False) -> Mesh:
    """Adapt the mesh toward unit metric edge lengths; deterministic.

    Stops after max_passes or as soon as a pass fires no split, collapse or
    flip (smoothing alone does not count).  Any operation that would invert
    an element or move a boundary vertex off its segment is rolled back by
    simply not being applied.
    """
    ed = _Editor(mesh)
    for _ in range(max_passes):
        n_ops = 0
        n_ops += _split_phase(ed, field)
        n_ops += _collapse_phase(ed, field)
        n_ops += _flip_phase(ed, field)
        _smooth_phase(ed, field)
        if debug:
            ed.to_mesh().validate()
        if n_ops == 0:
            break
    return ed.to_mesh()


@dataclass(frozen=True)
class TargetingResult:
    lam: float
    mesh: Mesh
    n_triangles: int
    converged: bool


def field_complexity(field: MetricField, rect, n_samples: int = 128) -> float:
    """Triangle count a unit-edge mesh of the field needs: int sqrt(det H) / (sqrt(3)/4).

    sqrt(3)/4 is the metric area of a unit-edge equilateral triangle, the
    ideal element of a unit mesh.
    """
    xmin, xmax, ymin, ymax = map(float, rect)
    xs = (np.arange(n_samples) + 0.5) / n_samples * (xmax - xmin) + xmin
    ys = (np.arange(n_samples) + 0.5) / n_samples * (ymax - ymin) + ymin
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    t = field.tensor_batch(pts)
    det = np.maximum(t[:, 0] * t[:, 2] - t[:, 1] ** 2, 0.0)
    cell = (xmax - xmin) * (ymax - ymin) / n_samples**2
    return float(np.sqrt(det).sum() * cell / (np.sqrt(3.0) / 4.0))


def cardinality_targeting(
    field: MetricField,
    target: int,
    rect,
    tol: float = 0.10,
    max_iters: int = 20,
    max_passes: int = 25,
    n0: int = 8,
) -> TargetingResult:
    """Scale the field (linearly in lam, so #T scales linearly too) until the
    adapted mesh cardinality is within +-tol of the target.

    The first guess comes from the field's complexity integral; afterwards a
    projection step is used until a bracket exists, then geometric bisection.
    After max_iters the nearest achieved result is returned (converged=False).
    """
    if target < 50:
        raise ValueError("target must be >= 50")
    base = field.with_lambda(1.0)
    lam = target / max(field_complexity(base, rect), 1e-12)
    lam_lo = lam_hi = None
    best = None
    converged = False
    for _ in range(max_iters):
        mesh = adapt(uniform_mesh(rect, n0), base.with_lambda(lam), max_passes=max_passes)
        nt = mesh.n_triangles
        if best is None or abs(nt - target) < abs(best.n_triangles - target):
            best = TargetingResult(lam, mesh, nt, False)
        if abs(nt - target) <= tol * target:
            converged = True
            best = TargetingResult(lam, mesh, nt, True)
            break
        if nt < target:
            lam_lo = lam if lam_lo is None else max(lam_lo, lam)
        else:
            lam_hi = lam if lam_hi is None else min(lam_hi, lam)
        if lam_lo is not None and lam_hi is not None:
            lam = float(np.sqrt(lam_lo * lam_hi))
        else:
            lam = lam * float(np.clip(target / max(nt, 1), 0.25, 4.0))
    if not converged and best is not None:
        return best
    return best
