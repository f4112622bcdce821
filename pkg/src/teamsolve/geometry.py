"""Simplicial complexes over boxes, finite point spaces, and hat-function test bases.

The solver parametrizes continuous test functions by vertex-interpolation
("hat") functions on a simplicial complex.  This module provides:

* ``SimplicialComplex`` -- a triangulated domain with point location and
  barycentric coordinates,
* ``build_box_partition`` -- regular grid over a box, each cell triangulated
  by the order-based (Kuhn) triangulation into ``d!`` simplices,
* ``FiniteSpace`` -- a finite point set (degenerate complex of 0-simplices),
* ``HatBasis`` / ``IndicatorBasis`` -- the test-function bases with one
  designated vertex excluded,
* mesh statistics (``epsilon_bar``) and a-priori partition planning
  (``plan_partition``).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

TOL_GEOM = 1e-9


class GeometryError(ValueError):
    pass


class PointOutsideComplexError(GeometryError):
    """Raised when a query point is not covered by any simplex."""


class BudgetError(GeometryError):
    """Raised when the partition-planning error budget is non-positive."""


def _norm(v, ord=2):
    """Vector norm along the last axis for norm tag 1, 2 or inf."""
    return np.linalg.norm(np.asarray(v, dtype=float), ord=ord, axis=-1)


class SimplicialComplex:
    """A finite collection of d-simplices in R^d sharing vertices along faces.

    Parameters
    ----------
    vertices : (n, d) array
        Distinct vertex coordinates.
    simplices : (m, d+1) int array
        Vertex indices of each simplex.  Every simplex must be
        non-degenerate (its d edge vectors are linearly independent).
    """

    def __init__(self, vertices, simplices, _grid=None):
        self.vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
        self.simplices = np.atleast_2d(np.asarray(simplices, dtype=int))
        self.dim = self.vertices.shape[1]
        if self.simplices.shape[1] != self.dim + 1:
            raise GeometryError(
                "simplices must have dim+1 = %d vertices, got %d"
                % (self.dim + 1, self.simplices.shape[1]))
        self._grid = _grid  # (lo, widths, counts, perm_index) for box partitions
        self._validate()
        self._build_cell_data()

    def _validate(self):
        v = np.ascontiguousarray(np.round(self.vertices, 12))
        uniq = np.unique(v.view([('', v.dtype)] * v.shape[1]))
        if uniq.shape[0] != v.shape[0]:
            raise GeometryError("duplicate vertices")
        for s, idx in enumerate(self.simplices):
            edges = self.vertices[idx[1:]] - self.vertices[idx[0]]
            scale = max(np.abs(edges).max(), 1.0)
            if abs(np.linalg.det(edges)) <= (TOL_GEOM * scale) ** self.dim:
                raise GeometryError("degenerate simplex %d" % s)

    def _build_cell_data(self):
        # Per-simplex interpolation matrix: lam = Minv @ [1, x]; the columns
        # of Minv[:, 1:] are the gradients of the barycentric coordinates.
        n_s = len(self.simplices)
        d = self.dim
        self._minv = np.empty((n_s, d + 1, d + 1))
        for s, idx in enumerate(self.simplices):
            M = np.empty((d + 1, d + 1))
            M[0, :] = 1.0
            M[1:, :] = self.vertices[idx].T
            self._minv[s] = np.linalg.inv(M)
        self._cell_pts = self.vertices[self.simplices]          # (m, d+1, d)
        diffs = self._cell_pts[:, :, None, :] - self._cell_pts[:, None, :, :]
        self._cell_diam2 = np.sqrt((diffs ** 2).sum(-1)).max(axis=(1, 2))

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_simplices(self):
        return self.simplices.shape[0]

    def cell_diameters(self, ord=2):
        """Max pairwise vertex distance per simplex in the given norm."""
        if ord == 2:
            return self._cell_diam2.copy()
        diffs = self._cell_pts[:, :, None, :] - self._cell_pts[:, None, :, :]
        return _norm(diffs, ord).max(axis=(1, 2))

    def vertex_diameter(self, ord=2):
        diffs = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(_norm(diffs, ord).max())

    def volumes(self):
        """Lebesgue volume of each simplex."""
        edges = self._cell_pts[:, 1:, :] - self._cell_pts[:, :1, :]
        dets = np.abs(np.linalg.det(edges))
        return dets / math.factorial(self.dim)

    def barycentric(self, s, x):
        """Barycentric coordinates of x in simplex s (no membership check)."""
        q = np.concatenate(([1.0], np.asarray(x, dtype=float)))
        return self._minv[s] @ q

    def locate(self, x, tol=TOL_GEOM):
        """Locate x in the complex.

        Returns ``(simplex_index, barycentric)`` where the coordinates are
        clamped to be >= 0 and renormalized to sum to 1.  On shared faces any
        containing simplex may be returned.

        Raises
        ------
        PointOutsideComplexError
            If x is farther than ``tol`` from every simplex.
        """
        x = np.asarray(x, dtype=float)
        if self._grid is not None:
            s, lam = self._grid_locate(x, tol)
            if s is not None:
                return s, lam
            raise PointOutsideComplexError("point %s outside complex" % x)
        best, best_lam, best_viol = None, None, np.inf
        for s in range(self.n_simplices):
            lam = self.barycentric(s, x)
            viol = -lam.min()
            if viol < best_viol:
                best, best_lam, best_viol = s, lam, viol
            if viol <= 0.0:
                break
        if best_viol > tol:
            raise PointOutsideComplexError("point %s outside complex" % x)
        lam = np.clip(best_lam, 0.0, None)
        return best, lam / lam.sum()

    def contains(self, x, tol=TOL_GEOM):
        try:
            self.locate(x, tol)
            return True
        except PointOutsideComplexError:
            return False

    # -- regular-grid fast path ------------------------------------------

    def _grid_locate(self, x, tol):
        lo, widths, counts, perms, perm_lookup = self._grid
        f = (x - lo) / widths
        if np.any(f < -tol / widths.min()) or np.any(f > counts + tol / widths.min()):
            return None, None
        f = np.clip(f, 0.0, counts)
        cell = np.minimum(f.astype(int), counts - 1)
        frac = f - cell
        order = tuple(np.argsort(-frac, kind="stable"))
        cell_flat = int(np.ravel_multi_index(cell, counts))
        s = cell_flat * len(perms) + perm_lookup[order]
        fs = frac[list(order)]
        lam = np.empty(self.dim + 1)
        lam[0] = 1.0 - fs[0]
        lam[1:-1] = fs[:-1] - fs[1:]
        lam[-1] = fs[-1]
        lam = np.clip(lam, 0.0, None)
        return s, lam / lam.sum()

    def grid_locate_many(self, X):
        """Vectorized locate for box partitions: (simplex idx, bary) arrays."""
        if self._grid is None:
            raise GeometryError("not a grid complex")
        lo, widths, counts, perms, perm_lookup = self._grid
        X = np.atleast_2d(np.asarray(X, dtype=float))
        f = np.clip((X - lo) / widths, 0.0, counts.astype(float))
        cell = np.minimum(f.astype(int), counts - 1)
        frac = f - cell
        order = np.argsort(-frac, axis=1, kind="stable")
        fs = np.take_along_axis(frac, order, axis=1)
        n, d = X.shape
        lam = np.empty((n, d + 1))
        lam[:, 0] = 1.0 - fs[:, 0]
        if d > 1:
            lam[:, 1:-1] = fs[:, :-1] - fs[:, 1:]
        lam[:, -1] = fs[:, -1]
        np.clip(lam, 0.0, None, out=lam)
        lam /= lam.sum(axis=1, keepdims=True)
        cell_flat = np.ravel_multi_index(tuple(cell.T), tuple(counts))
        pidx = np.fromiter(
            (perm_lookup[tuple(o)] for o in order), dtype=int, count=n)
        return cell_flat * len(perms) + pidx, lam

    # -- serialization ---------------------------------------------------

    def to_json(self):
        return {"dim": int(self.dim),
                "vertices": self.vertices.tolist(),
                "simplices": self.simplices.tolist()}

    @classmethod
    def from_json(cls, doc):
        c = cls(np.asarray(doc["vertices"], dtype=float),
                np.asarray(doc["simplices"], dtype=int))
        if c.dim != int(doc["dim"]):
            raise GeometryError("dim mismatch in complex document")
        return c

    def check_face_property(self, tol=1e-9):
        """Exhaustively verify that pairwise intersections are common faces.

        For every pair of simplices this solves two small LPs asking for a
        common point whose barycentric weight on the non-shared vertices is
        maximal; the pair passes when no such point exists beyond tolerance.
        Desk-scale only (quadratic in the number of simplices).
        """
        from scipy.optimize import linprog as _lp
        d = self.dim
        for a in range(self.n_simplices):
            for b in range(a + 1, self.n_simplices):
                ia, ib = self.simplices[a], self.simplices[b]
                shared = set(ia) & set(ib)
                Va, Vb = self.vertices[ia], self.vertices[ib]
                # point x = Va' lam = Vb' mu, lam, mu >= 0, sums 1
                A_eq = np.zeros((d + 2, 2 * (d + 1)))
                A_eq[:d, :d + 1] = Va.T
                A_eq[:d, d + 1:] = -Vb.T
                A_eq[d, :d + 1] = 1.0
                A_eq[d + 1, d + 1:] = 1.0
                b_eq = np.concatenate([np.zeros(d), [1.0, 1.0]])
                for side, idxs in ((0, ia), (1, ib)):
                    c = np.zeros(2 * (d + 1))
                    off = side * (d + 1)
                    for j, v in enumerate(idxs):
                        if v not in shared:
                            c[off + j] = -1.0
                    if not c.any():
                        continue
                    res = _lp(c, A_eq=A_eq, b_eq=b_eq,
                              bounds=[(0, None)] * (2 * (d + 1)),
                              method="highs")
                    if res.status == 0 and -res.fun > tol:
                        return False
        return True


def build_box_partition(box, counts):
    """Triangulate a d-dimensional box into a regular simplicial grid.

    Parameters
    ----------
    box : sequence of (lo, hi) pairs, one per dimension
    counts : sequence of positive ints, cells per dimension

    Each hyperrectangle cell is triangulated into ``d!`` simplices by the
    order-based (Kuhn) triangulation, which matches faces across cells.
    """
    box = np.atleast_2d(np.asarray(box, dtype=float))
    counts = np.atleast_1d(np.asarray(counts, dtype=int))
    d = box.shape[0]
    if counts.shape[0] != d:
        raise GeometryError("box has %d dims but counts has %d" % (d, len(counts)))
    if np.any(box[:, 1] - box[:, 0] <= 0):
        raise GeometryError("box sides must have positive length")
    if np.any(counts < 1):
        raise GeometryError("counts must be >= 1")
    lo = box[:, 0]
    widths = (box[:, 1] - box[:, 0]) / counts
    grids = [np.linspace(box[j, 0], box[j, 1], counts[j] + 1) for j in range(d)]
    mesh = np.meshgrid(*grids, indexing="ij")
    vertices = np.stack([m.ravel() for m in mesh], axis=1)
    vshape = tuple(counts + 1)

    perms = list(itertools.permutations(range(d)))
    perm_lookup = {p: i for i, p in enumerate(perms)}
    simplices = []
    for cell in itertools.product(*[range(c) for c in counts]):
        base = np.asarray(cell, dtype=int)
        for perm in perms:
            idx = [np.ravel_multi_index(tuple(base), vshape)]
            k = base.copy()
            for j in perm:
                k[j] += 1
                idx.append(np.ravel_multi_index(tuple(k), vshape))
            simplices.append(idx)
    grid = (lo, widths, counts, perms, perm_lookup)
    return SimplicialComplex(vertices, np.asarray(simplices), _grid=grid)


class FiniteSpace:
    """A finite point set, treated as a complex of 0-dimensional cells."""

    def __init__(self, points):
        self.vertices = np.atleast_2d(np.asarray(points, dtype=float))
        if self.vertices.ndim != 2:
            raise GeometryError("points must be a 2d array")
        self.dim = self.vertices.shape[1]
        v = np.ascontiguousarray(np.round(self.vertices, 12))
        if np.unique(v.view([('', v.dtype)] * v.shape[1])).shape[0] != len(v):
            raise GeometryError("duplicate points")

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    def locate(self, x, tol=TOL_GEOM):
        """Index of the point matching x within tolerance."""
        d = _norm(self.vertices - np.asarray(x, dtype=float), 2)
        j = int(np.argmin(d))
        if d[j] > tol:
            raise PointOutsideComplexError("point %s not in finite space" % x)
        return j

    def contains(self, x, tol=TOL_GEOM):
        try:
            self.locate(x, tol)
            return True
        except PointOutsideComplexError:
            return False

    def cell_diameters(self, ord=2):
        return np.zeros(self.n_vertices)

    def vertex_diameter(self, ord=2):
        if self.n_vertices == 1:
            return 0.0
        diffs = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(_norm(diffs, ord).max())

    def to_json(self):
        return {"points": self.vertices.tolist()}

    @classmethod
    def from_json(cls, doc):
        return cls(np.asarray(doc["points"], dtype=float))


def _default_excluded(vertices):
    """Index of the lexicographically smallest vertex."""
    return int(np.lexsort(vertices.T[::-1])[0])


class HatBasis:
    """Vertex-interpolation test functions on a complex, one vertex dropped.

    The basis value at x is the vector of barycentric weights of the
    non-excluded vertices in a simplex containing x; the excluded vertex's
    weight is implicit (one minus the sum).
    """

    def __init__(self, complex, excluded_vertex=None):
        self.complex = complex
        if excluded_vertex is None:
            excluded_vertex = _default_excluded(complex.vertices)
        self.excluded = int(excluded_vertex)
        if not 0 <= self.excluded < complex.n_vertices:
            raise GeometryError("excluded vertex index out of range")
        self.m = complex.n_vertices - 1
        cols = np.full(complex.n_vertices, -1, dtype=int)
        keep = [v for v in range(complex.n_vertices) if v != self.excluded]
        cols[keep] = np.arange(self.m)
        self._col = cols                      # vertex index -> component (-1 = excluded)
        self._keep = np.asarray(keep, dtype=int)

    @property
    def vertices(self):
        return self.complex.vertices

    def eval(self, x, tol=TOL_GEOM):
        """Basis vector at a single point."""
        s, lam = self.complex.locate(x, tol)
        out = np.zeros(self.m)
        for v, l in zip(self.complex.simplices[s], lam):
            c = self._col[v]
            if c >= 0:
                out[c] = l
        return out

    def eval_many(self, X, tol=TOL_GEOM):
        """Basis vectors for an (n, d) array of points, (n, m) output."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        out = np.zeros((n, self.m))
        if getattr(self.complex, "_grid", None) is not None:
            # bounds check, then fully vectorized grid location
            lo, widths, counts, _, _ = self.complex._grid
            hi = lo + widths * counts
            bad = np.any(X < lo - TOL_GEOM, axis=1) | np.any(X > hi + TOL_GEOM, axis=1)
            if bad.any():
                raise PointOutsideComplexError(
                    "%d points outside complex" % int(bad.sum()))
            sidx, lam = self.complex.grid_locate_many(X)
            verts = self.complex.simplices[sidx]              # (n, d+1)
            cols = self._col[verts]                           # (n, d+1)
            rows = np.repeat(np.arange(n), verts.shape[1])
            cc = cols.ravel()
            keep = cc >= 0
            out[rows[keep], cc[keep]] = lam.ravel()[keep]
            return out
        for i in range(n):
            out[i] = self.eval(X[i], tol)
        return out

    def vertex_values(self):
        """(n_vertices, m) matrix of basis vectors at every vertex."""
        out = np.zeros((self.complex.n_vertices, self.m))
        for v in range(self.complex.n_vertices):
            c = self._col[v]
            if c >= 0:
                out[v, c] = 1.0
        return out

    def gradients(self):
        """Per-simplex gradient rows of <g(.), y>: (n_simplices, d+1, d).

        Row j is the gradient of the barycentric coordinate of local vertex j
        inside the simplex; pair with ``component_of`` to map to y entries.
        """
        return self.complex._minv[:, :, 1:].copy()

    def component_of(self, vertex_index):
        c = self._col[vertex_index]
        return None if c < 0 else int(c)


class IndicatorBasis:
    """One-hot test functions on a finite space, one point dropped."""

    def __init__(self, space, excluded_vertex=None):
        self.complex = space
        if excluded_vertex is None:
            excluded_vertex = _default_excluded(space.vertices)
        self.excluded = int(excluded_vertex)
        self.m = space.n_vertices - 1
        cols = np.full(space.n_vertices, -1, dtype=int)
        keep = [v for v in range(space.n_vertices) if v != self.excluded]
        cols[keep] = np.arange(self.m)
        self._col = cols
        self._keep = np.asarray(keep, dtype=int)

    @property
    def vertices(self):
        return self.complex.vertices

    def eval(self, x, tol=TOL_GEOM):
        j = self.complex.locate(x, tol)
        out = np.zeros(self.m)
        c = self._col[j]
        if c >= 0:
            out[c] = 1.0
        return out

    def eval_many(self, X, tol=TOL_GEOM):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros((X.shape[0], self.m))
        for i in range(X.shape[0]):
            out[i] = self.eval(X[i], tol)
        return out

    def vertex_values(self):
        out = np.zeros((self.complex.n_vertices, self.m))
        for v in range(self.complex.n_vertices):
            c = self._col[v]
            if c >= 0:
                out[v, c] = 1.0
        return out

    def component_of(self, vertex_index):
        c = self._col[vertex_index]
        return None if c < 0 else int(c)


def locate(complex, x, tol=TOL_GEOM):
    """Point location: (simplex index, barycentric coordinates)."""
    return complex.locate(x, tol)


def eval_hat(basis, x, tol=TOL_GEOM):
    """Evaluate a hat/indicator basis at a point."""
    return basis.eval(x, tol)


def epsilon_bar(complex, varsigma, ord=2):
    """Mesh-based upper bound on the W1 radius of a moment class.

    ``2 * (max cell diameter) + (varsigma / 2) * (overall vertex diameter)``
    with distances taken in the given norm.  For a finite space the cell
    diameters are zero.
    """
    if varsigma < 0:
        raise GeometryError("varsigma must be >= 0")
    cd = float(np.max(complex.cell_diameters(ord))) if complex.n_vertices else 0.0
    return 2.0 * cd + 0.5 * varsigma * complex.vertex_diameter(ord)


@dataclass
class PartitionPlan:
    """Cell counts per dimension for each type space and the quality space."""
    type_counts: list
    quality_counts: tuple
    varsigma_bar: float


def plan_partition(eps, eps_par, eps_star, N, L1, L2_bar, type_boxes,
                   quality_box, C_type=None, C_quality=1.0, ord=2):
    """Per-dimension cell counts guaranteeing a target equilibrium accuracy.

    Parameters
    ----------
    eps, eps_par, eps_star : floats with eps > eps_par + eps_star > 0
        Total accuracy target and the two solver budget components.
    N : number of categories
    L1 : per-category type-space Lipschitz constants
    L2_bar : max quality-space Lipschitz constant
    type_boxes : per-category list of (lo, hi) pairs
    quality_box : list of (lo, hi) pairs
    C_type, C_quality : norm-equivalence constants (>= 1), default 1
    ord : norm tag used for the side-length vector in the varsigma threshold

    Returns a :class:`PartitionPlan`.  Counts of zero (possible for the
    quality space when N == 1) are clamped to one cell.
    """
    budget = eps - eps_par - eps_star
    if budget <= 0:
        raise BudgetError("eps - eps_par - eps_star must be positive")
    L1 = np.atleast_1d(np.asarray(L1, dtype=float))
    if C_type is None:
        C_type = np.ones(N)
    C_type = np.atleast_1d(np.asarray(C_type, dtype=float))
    type_counts = []
    for i in range(N):
        box = np.atleast_2d(np.asarray(type_boxes[i], dtype=float))
        d_i = box.shape[0]
        sides = box[:, 1] - box[:, 0]
        cnt = np.ceil(8.0 * N * L1[i] * sides * C_type[i] * math.sqrt(d_i)
                      / budget).astype(int)
        type_counts.append(tuple(int(c) for c in np.maximum(cnt, 1)))
    qbox = np.atleast_2d(np.asarray(quality_box, dtype=float))
    d_0 = qbox.shape[0]
    qsides = qbox[:, 1] - qbox[:, 0]
    qcnt = np.ceil(8.0 * (N - 1) * L2_bar * qsides * C_quality * math.sqrt(d_0)
                   / budget).astype(int)
    quality_counts = tuple(int(c) for c in np.maximum(qcnt, 1))

    denoms = [float(_norm(box[:, 1] - box[:, 0], ord)) * N * L1[i]
              for i, box in enumerate(np.atleast_2d(np.asarray(b, dtype=float))
                                      for b in type_boxes)]
    denoms.append(float(_norm(qsides, ord)) * (N - 1) * L2_bar)
    dmax = max(denoms)
    varsigma_bar = math.inf if dmax <= 0 else 0.5 * budget / dmax
    return PartitionPlan(type_counts, quality_counts, varsigma_bar)


def space_to_json(space):
    if isinstance(space, FiniteSpace):
        return {"type": "finite", **space.to_json()}
    return {"type": "complex", **space.to_json()}


def space_from_json(doc):
    if doc.get("type") == "finite":
        return FiniteSpace.from_json(doc)
    return SimplicialComplex.from_json(doc)


def save_complex(complex, path):
    with open(path, "w") as f:
        json.dump(space_to_json(complex), f)


def load_complex(path):
    with open(path) as f:
        return space_from_json(json.load(f))
