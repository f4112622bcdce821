"""Concrete cost models with Lipschitz constants and oracle decompositions.

Four families are shipped:

* ``business_location_cost`` -- commuting costs in a city with a railway
  line: scaled city-block walking plus a station-to-station train fare,
  taking the cheaper of the direct walk and the best station pair; the last
  category pays a pure restocking cost.
* ``barycenter_cost`` -- the 2-Wasserstein barycenter cost written without
  its measure-dependent constant; the constant is tracked separately so
  reported bounds refer to the sum of squared W2 distances.
* ``capped_affine_cost`` -- one-dimensional preference matching with a dead
  zone, a linear ramp and a saturation cap.
* ``tabulated_cpwa_cost`` -- cost given by a value table on vertex pairs,
  extended by barycentric interpolation in both arguments.

Each model carries its Lipschitz constants w.r.t. the Euclidean metric and
the structures that make the global-minimization oracle, the transfer
function evaluation and the pushforward quality selector exact: a min-of-
convex-terms decomposition whose per-term kink arrangements yield finite
candidate sets, or LP-ready coupled pieces.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .geometry import FiniteSpace

_CAND_TOL = 1e-9


class CostModelError(ValueError):
    pass


def full_vertex_weights(space, X):
    """(n, n_vertices) barycentric weight rows of points in a space."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    W = np.zeros((n, space.n_vertices))
    if isinstance(space, FiniteSpace):
        for i, x in enumerate(X):
            W[i, space.locate(x)] = 1.0
        return W
    if getattr(space, "_grid", None) is not None:
        sidx, lam = space.grid_locate_many(X)
        verts = space.simplices[sidx]
        rows = np.repeat(np.arange(n), verts.shape[1])
        W[rows, verts.ravel()] = lam.ravel()
        return W
    for i, x in enumerate(X):
        s, lam = space.locate(x)
        W[i, space.simplices[s]] = lam
    return W


def contains_many(space, P, tol=1e-9):
    """Vectorized membership mask for an (n, d) array of points."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if isinstance(space, FiniteSpace):
        d = np.linalg.norm(P[:, None, :] - space.vertices[None], axis=2)
        return d.min(axis=1) <= tol
    if getattr(space, "_grid", None) is not None:
        lo, widths, counts, _, _ = space._grid
        hi = lo + widths * counts
        return np.all(P >= lo - tol, axis=1) & np.all(P <= hi + tol, axis=1)
    mask = np.zeros(P.shape[0], dtype=bool)
    q = np.concatenate([np.ones((P.shape[0], 1)), P], axis=1)
    for s in range(space.n_simplices):
        lam = q @ space._minv[s].T
        mask |= lam.min(axis=1) >= -tol
    return mask


def unique_edges(complex):
    """(E, 2) vertex-index pairs of all simplex edges, deduplicated."""
    pairs = set()
    for simplex in complex.simplices:
        for a, b in itertools.combinations(simplex, 2):
            pairs.add((min(a, b), max(a, b)))
    return np.asarray(sorted(pairs), dtype=int)


def _dedup_points(P, tol=1e-12):
    if len(P) == 0:
        return np.zeros((0, 0))
    P = np.asarray(P, dtype=float)
    r = np.round(P / max(tol, 1e-300)).astype(np.int64) if tol > 0 else P
    _, idx = np.unique(r, axis=0, return_index=True)
    return P[np.sort(idx)]


def axis_arrangement_candidates(space, anchors):
    """Candidate minimizer points of a convex PWA function whose kinks lie on
    the axis-aligned hyperplanes through the given anchor points.

    Returns the union over the complex of: cell vertices, intersections of
    the anchor hyperplanes with cell edges, and pairwise hyperplane crossing
    points that land inside the complex.  Minimizing any function that is
    affine between these hyperplanes within each cell is exact on this set.
    """
    if isinstance(space, FiniteSpace):
        return space.vertices.copy()
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    d = space.dim
    pts = [space.vertices]
    edges = unique_edges(space)
    e0 = space.vertices[edges[:, 0]]
    e1 = space.vertices[edges[:, 1]]
    de = e1 - e0
    levels = [np.unique(anchors[:, l]) for l in range(d)]
    for l in range(d):
        for a in levels[l]:
            denom = de[:, l]
            ok = np.abs(denom) > 1e-14
            t = np.where(ok, (a - e0[:, l]) / np.where(ok, denom, 1.0), -1.0)
            hit = ok & (t >= -1e-12) & (t <= 1 + 1e-12)
            if hit.any():
                pts.append(e0[hit] + np.clip(t[hit], 0, 1)[:, None] * de[hit])
    if d >= 2:
        crossings = np.array(list(itertools.product(*levels)))
        if crossings.size:
            crossings = crossings.reshape(-1, d)
            inside = contains_many(space, crossings)
            if inside.any():
                pts.append(crossings[inside])
    return _dedup_points(np.vstack(pts))


# ---------------------------------------------------------------------------
# oracle term descriptors (min-of-terms decomposition)

class SeparableL1Term:
    """weight_x * ||x - anchor_x||_1 + weight_z * ||z - anchor_z||_1 + const.

    Either side may be absent (anchor None).  Convex, and separable across
    the two arguments, so each side is minimized independently over its own
    complex using the axis arrangement candidates.
    """

    def __init__(self, anchor_x, weight_x, anchor_z, weight_z, const=0.0):
        self.anchor_x = None if anchor_x is None else np.asarray(anchor_x, float)
        self.weight_x = float(weight_x)
        self.anchor_z = None if anchor_z is None else np.asarray(anchor_z, float)
        self.weight_z = float(weight_z)
        self.const = float(const)

    def eval(self, X, Z):
        v = np.full(np.atleast_2d(X).shape[0], self.const)
        if self.anchor_x is not None:
            v = v + self.weight_x * np.abs(np.atleast_2d(X) - self.anchor_x).sum(1)
        if self.anchor_z is not None:
            v = v + self.weight_z * np.abs(np.atleast_2d(Z) - self.anchor_z).sum(1)
        return v


class DirectL1Term:
    """weight * ||x - z||_1 with matching dimensions (coupled; needs an LP)."""

    def __init__(self, weight):
        self.weight = float(weight)

    def eval(self, X, Z):
        return self.weight * np.abs(np.atleast_2d(X) - np.atleast_2d(Z)).sum(1)


class ScalarRampTerm:
    """slope * (|x - <s, z>| - kappa1)^+ for scalar x (coupled; needs an LP)."""

    def __init__(self, s, kappa1, slope):
        self.s = np.atleast_1d(np.asarray(s, dtype=float))
        self.kappa1 = float(kappa1)
        self.slope = float(slope)

    def eval(self, X, Z):
        f = np.atleast_2d(X)[:, 0] - np.atleast_2d(Z) @ self.s
        return self.slope * np.clip(np.abs(f) - self.kappa1, 0.0, None)


# ---------------------------------------------------------------------------

class CostModel:
    """Base class: N categories, eval, Lipschitz constants, objective shift."""

    kind = None
    metric = "euclidean"
    shift = 0.0

    def eval(self, i, X, Z):
        raise NotImplementedError

    def eval_sum(self, X_list, Z):
        """Total cost over all categories for batched samples."""
        tot = np.zeros(np.atleast_2d(Z).shape[0])
        for i in range(self.N):
            tot += self.eval(i, X_list[i], Z)
        return tot

    def check_lipschitz(self, rng, x_sampler, z_sampler, n=10000, slack=1e-9):
        """Random-pair verification of the declared Lipschitz constants."""
        worst = 0.0
        for i in range(self.N):
            X1, X2 = x_sampler(i, n), x_sampler(i, n)
            Z1, Z2 = z_sampler(n), z_sampler(n)
            lhs = np.abs(self.eval(i, X1, Z1) - self.eval(i, X2, Z2))
            rhs = (self.L1[i] * np.linalg.norm(X1 - X2, axis=1)
                   + self.L2[i] * np.linalg.norm(Z1 - Z2, axis=1))
            worst = max(worst, float((lhs - rhs).max()))
        return worst <= slack, worst

    # hooks with safe defaults; families override where exactness needs more
    def transfer_x_candidates(self, i, z, x_space):
        """Finite x-set containing a minimizer of x -> c_i(x, z) - affine(x)
        for any per-cell-affine perturbation."""
        return x_space.vertices

    def oracle_terms(self, i):
        raise CostModelError("cost model lacks a term decomposition")


class BusinessLocationCost(CostModel):
    """Commuting/restocking costs on a city with a railway line (2d)."""

    kind = "cpwa-pieces"

    def __init__(self, stations, c_walk=0.15, c_train=0.015, c_restock=0.4,
                 n_categories=5):
        self.stations = np.atleast_2d(np.asarray(stations, dtype=float))
        if self.stations.shape[1] != 2:
            raise CostModelError("stations must be 2d points")
        s = np.ascontiguousarray(np.round(self.stations, 12))
        if np.unique(s.view([('', s.dtype)] * 2)).shape[0] != len(s):
            raise CostModelError("stations must be distinct")
        self.c_walk = float(c_walk)
        self.c_train = float(c_train)
        self.c_restock = float(c_restock)
        self.N = int(n_categories)
        sqrt2 = math.sqrt(2.0)
        self.L1 = np.full(self.N, self.c_walk * sqrt2)
        self.L2 = np.full(self.N, self.c_walk * sqrt2)
        self.L1[self.N - 1] = self.c_restock * sqrt2
        self.L2[self.N - 1] = self.c_restock * sqrt2
        self._cand_cache = {}

    def eval(self, i, X, Z):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        direct_w = self.c_restock if i == self.N - 1 else self.c_walk
        direct = direct_w * np.abs(X - Z).sum(1)
        if i == self.N - 1:
            return direct
        U = self.stations
        dxu = self.c_walk * np.abs(X[:, None, :] - U[None]).sum(2)   # (n, S)
        dzu = self.c_walk * np.abs(Z[:, None, :] - U[None]).sum(2)
        S = len(U)
        fare = self.c_train * np.abs(np.arange(S)[:, None] - np.arange(S)[None])
        station = (dxu[:, :, None] + dzu[:, None, :] + fare[None]).min(axis=(1, 2))
        return np.minimum(station, direct)

    def oracle_terms(self, i):
        if i == self.N - 1:
            return [DirectL1Term(self.c_restock)]
        terms = [DirectL1Term(self.c_walk)]
        S = len(self.stations)
        for j in range(S):
            for jp in range(S):
                terms.append(SeparableL1Term(
                    self.stations[j], self.c_walk,
                    self.stations[jp], self.c_walk,
                    self.c_train * abs(j - jp)))
        return terms

    def transfer_x_candidates(self, i, z, x_space):
        # cache holds the space itself so a recycled id cannot alias
        entry = self._cand_cache.get(id(x_space))
        if entry is None or entry[0] is not x_space:
            entry = (x_space,
                     axis_arrangement_candidates(x_space, self.stations))
            self._cand_cache[id(x_space)] = entry
        static = entry[1]
        if isinstance(x_space, FiniteSpace):
            return static
        dyn = axis_arrangement_candidates(x_space, np.atleast_2d(z))
        return _dedup_points(np.vstack([static, dyn]))

    def z_opt_candidates(self, X_list, z_space):
        """Per-sample candidate minimizer points of z -> sum_i c_i(x_i, z).

        The quality space must be a box grid; the candidate pool is the
        cross product of the vertical/horizontal kink lines (station and
        per-sample type coordinates) clipped into the box.
        """
        if getattr(z_space, "_grid", None) is None:
            raise CostModelError("business-location z_opt needs a box-grid "
                                 "quality space")
        lo, widths, counts, _, _ = z_space._grid
        hi = lo + widths * counts
        n = np.atleast_2d(X_list[0]).shape[0]
        static_v = np.concatenate([self.stations[:, 0], [lo[0], hi[0]]])
        static_h = np.concatenate([self.stations[:, 1], [lo[1], hi[1]]])
        xs = np.stack([np.atleast_2d(X)[:, :2] for X in X_list], axis=1)  # (n, N, 2)
        vpool = np.concatenate(
            [np.broadcast_to(static_v, (n, len(static_v))), xs[:, :, 0]], axis=1)
        hpool = np.concatenate(
            [np.broadcast_to(static_h, (n, len(static_h))), xs[:, :, 1]], axis=1)
        vpool = np.clip(vpool, lo[0], hi[0])
        hpool = np.clip(hpool, lo[1], hi[1])
        V, H = vpool.shape[1], hpool.shape[1]
        cand = np.empty((n, V * H, 2))
        cand[:, :, 0] = np.repeat(vpool, H, axis=1)
        cand[:, :, 1] = np.tile(hpool, (1, V))
        return cand, np.ones((n, V * H), dtype=bool)


class QuadraticBarycenterCost(CostModel):
    """c_i(x, z) = lam_i (||z||^2 - 2 <x, z>), the squared-distance cost with
    its measure-dependent constant removed.  The constant (sum of weighted
    second moments) is kept in ``shift`` so that shifted bounds estimate the
    weighted sum of squared W2 distances."""

    kind = "quadratic"

    def __init__(self, weights, x_spaces, z_space, shift=0.0):
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise CostModelError("weights must be positive and sum to 1")
        self.lam = w
        self.N = len(w)
        self.shift = float(shift)
        zmax = float(np.linalg.norm(z_space.vertices, axis=1).max())
        self.L1 = 2.0 * w * zmax
        self.L2 = np.empty(self.N)
        for i in range(self.N):
            xmax = float(np.linalg.norm(x_spaces[i].vertices, axis=1).max())
            self.L2[i] = 2.0 * w[i] * (zmax + xmax)

    def eval(self, i, X, Z):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return self.lam[i] * ((Z ** 2).sum(1) - 2.0 * (X * Z).sum(1))


class CappedAffineCost(CostModel):
    """c_i(x, z) = (1/N) ((|x - <s_i, z>| ^ kappa2) - kappa1)^+ for scalar
    types; equals min{ramp, saturation constant}, which keeps the oracle and
    the quality selector exact on small candidate sets.

    ``kappa1 = 0`` and ``kappa2 = inf`` are accepted (degenerate instances
    such as a plain |x - <s, z>| cost for cross-checks)."""

    kind = "cpwa-pieces"

    def __init__(self, s_list, kappa1, kappa2):
        self.s = np.atleast_2d(np.asarray(s_list, dtype=float))
        self.N = self.s.shape[0]
        self.d0 = self.s.shape[1]
        if np.any(np.abs(np.linalg.norm(self.s, axis=1) - 1.0) > 1e-9):
            raise CostModelError("direction vectors must be unit length")
        self.kappa1 = np.atleast_1d(np.asarray(kappa1, dtype=float))
        self.kappa2 = np.atleast_1d(np.asarray(kappa2, dtype=float))
        if np.any(self.kappa1 < 0) or np.any(self.kappa2 <= self.kappa1):
            raise CostModelError("need 0 <= kappa1 < kappa2")
        self.L1 = np.full(self.N, 1.0 / self.N)
        self.L2 = np.full(self.N, 1.0 / self.N)

    def eval(self, i, X, Z):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        f = np.abs(X[:, 0] - Z @ self.s[i])
        return np.clip(np.minimum(f, self.kappa2[i]) - self.kappa1[i],
                       0.0, None) / self.N

    def oracle_terms(self, i):
        terms = [ScalarRampTerm(self.s[i], self.kappa1[i], 1.0 / self.N)]
        if np.isfinite(self.kappa2[i]):
            terms.append(SeparableL1Term(
                None, 0.0, None, 0.0,
                (self.kappa2[i] - self.kappa1[i]) / self.N))
        return terms

    def transfer_x_candidates(self, i, z, x_space):
        if isinstance(x_space, FiniteSpace):
            return x_space.vertices
        t = float(np.atleast_1d(z) @ self.s[i])
        pts = [x_space.vertices]
        for x in (t - self.kappa1[i], t + self.kappa1[i]):
            p = np.array([[x]])
            if contains_many(x_space, p)[0]:
                pts.append(p)
        return _dedup_points(np.vstack(pts))

    def z_opt_candidates(self, X_list, z_space):
        """Kink-line arrangement candidates for the summed cost.

        Writing each category cost as min{(|f_i| - kappa1)^+, const}, every
        selection of branches gives a convex function whose only kinks lie
        on the 2N lines <s_i, z> = x_i +- kappa1_i, so the candidate set of
        line/line, line/edge and vertex points is exact."""
        n = np.atleast_2d(X_list[0]).shape[0]
        xs = np.concatenate([np.atleast_2d(X)[:, :1] for X in X_list], axis=1)
        # rhs of the 2N lines per sample: (n, N, 2)
        rhs = np.stack([xs - self.kappa1[None, :], xs + self.kappa1[None, :]],
                       axis=2)
        verts = z_space.vertices
        cand = [np.broadcast_to(verts, (n,) + verts.shape)]
        masks = [np.ones((n, verts.shape[0]), dtype=bool)]
        if self.d0 == 1:
            s0 = self.s[:, 0]
            pts = (rhs / s0[None, :, None]).reshape(n, -1, 1)
            cand.append(pts)
            masks.append(contains_many(z_space, pts.reshape(-1, 1)).reshape(n, -1))
        else:
            edges = unique_edges(z_space)
            e0 = verts[edges[:, 0]]
            de = verts[edges[:, 1]] - e0
            # line x edge intersections
            se0 = self.s @ e0.T                # (N, E)
            sde = self.s @ de.T
            ok = np.abs(sde) > 1e-14
            for sgn in (0, 1):
                t = (rhs[:, :, sgn, None] - se0[None]) / np.where(ok, sde, 1.0)[None]
                hit = ok[None] & (t >= -1e-12) & (t <= 1 + 1e-12)
                pts = e0[None, None] + np.clip(t, 0, 1)[..., None] * de[None, None]
                cand.append(pts.reshape(n, -1, 2))
                masks.append(hit.reshape(n, -1))
            # line x line intersections across categories
            pair_rows = []
            for a, b in itertools.combinations(range(self.N), 2):
                M = np.stack([self.s[a], self.s[b]])
                if abs(np.linalg.det(M)) < 1e-12:
                    continue
                Minv = np.linalg.inv(M)
                pair_rows.append((a, b, Minv))
            if pair_rows:
                pts_ab = []
                for a, b, Minv in pair_rows:
                    for sa in (0, 1):
                        for sb in (0, 1):
                            r = np.stack([rhs[:, a, sa], rhs[:, b, sb]], axis=1)
                            pts_ab.append(r @ Minv.T)
                pts_ab = np.stack(pts_ab, axis=1)      # (n, P, 2)
                cand.append(pts_ab)
                masks.append(contains_many(
                    z_space, pts_ab.reshape(-1, 2)).reshape(n, -1))
        return (np.concatenate([np.ascontiguousarray(c) for c in cand], axis=1),
                np.concatenate(masks, axis=1))


class TabulatedCpwaCost(CostModel):
    """Cost tabulated on vertex pairs of the type/quality complexes and
    interpolated barycentrically in both arguments."""

    kind = "tabulated"

    def __init__(self, x_spaces, z_space, tables):
        self.N = len(tables)
        self.x_spaces = list(x_spaces)
        self.z_space = z_space
        self.tables = [np.asarray(T, dtype=float) for T in tables]
        for i, T in enumerate(self.tables):
            if T.shape != (x_spaces[i].n_vertices, z_space.n_vertices):
                raise CostModelError("table %d has shape %s" % (i, T.shape))
        self.L1 = np.empty(self.N)
        self.L2 = np.empty(self.N)
        for i in range(self.N):
            self.L1[i], self.L2[i] = self._lipschitz(i)

    def _grad_bound(self, space, values_for_cells):
        """Max euclidean norm over cells of the gradient of the barycentric
        interpolation of per-vertex values; finite spaces use the worst
        pairwise difference quotient instead."""
        if isinstance(space, FiniteSpace):
            V = space.vertices
            if len(V) < 2:
                return 0.0
            dist = np.linalg.norm(V[:, None, :] - V[None], axis=2)
            np.fill_diagonal(dist, np.inf)
            diffs = np.abs(values_for_cells[:, :, None]
                           - values_for_cells[:, None, :])
            return float((diffs / dist[None]).max())
        worst = 0.0
        for s, idx in enumerate(space.simplices):
            G = space._minv[s][:, 1:]          # (d+1, d): grad of lam rows
            vals = values_for_cells[:, idx]    # (k, d+1)
            worst = max(worst, float(np.linalg.norm(vals @ G, axis=1).max()))
        return worst

    def _lipschitz(self, i):
        T = self.tables[i]
        # gradient in x for fixed z: worst over z-vertex mixes is at z-vertices
        l1 = self._grad_bound(self.x_spaces[i], T.T)
        l2 = self._grad_bound(self.z_space, T)
        return max(l1, 1e-12), max(l2, 1e-12)

    def eval(self, i, X, Z):
        Wx = full_vertex_weights(self.x_spaces[i], X)
        Wz = full_vertex_weights(self.z_space, Z)
        return ((Wx @ self.tables[i]) * Wz).sum(1)

    def z_vertex_costs(self, i, X):
        """(n, n_z_vertices) cost of pairing each sample with each z vertex."""
        Wx = full_vertex_weights(self.x_spaces[i], X)
        return Wx @ self.tables[i]


def business_location_cost(stations, c_walk=0.15, c_train=0.015,
                           c_restock=0.4, n_categories=5):
    """Build the business-location cost model (defaults as configured)."""
    return BusinessLocationCost(stations, c_walk, c_train, c_restock,
                                n_categories)


def barycenter_cost(weights, x_spaces, z_space, measures=None,
                    shift_accounting=True):
    """Build the 2-Wasserstein barycenter cost model.

    When ``shift_accounting`` is on and the measures are supplied, the
    objective constant -- the weighted sum of exact second moments -- is
    computed and stored on the model so bounds can be reported on the
    squared-W2 scale.
    """
    shift = 0.0
    if shift_accounting and measures is not None:
        from .measures import second_moment
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        shift = float(sum(w[i] * second_moment(m) for i, m in enumerate(measures)))
    return QuadraticBarycenterCost(weights, x_spaces, z_space, shift)


def capped_affine_cost(s_list, kappa1, kappa2):
    """Build the capped-affine preference matching cost model."""
    return CappedAffineCost(s_list, kappa1, kappa2)


def tabulated_cpwa_cost(x_spaces, z_space, tables):
    """Build a tabulated CPWA cost model from vertex-pair value tables."""
    return TabulatedCpwaCost(x_spaces, z_space, tables)
