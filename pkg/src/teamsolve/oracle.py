"""Global minimization oracles.

Given a category index i, multipliers (y, w) on the test functions and a
tolerance tau, an oracle returns a tau-optimizer of

    min over (x, z) of  c_i(x, z) - <g_i(x), y> - <h(z), w>

together with its objective value, the test-function vectors at the
minimizer, and a certified lower bound on the true minimum.  The cell
oracles are exact (the certified bound equals the returned value); the
Lipschitz grid oracle certifies within a requested positive tau.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import FiniteSpace
from .linprog import BlockLp
from .problems import (DirectL1Term, QuadraticBarycenterCost, ScalarRampTerm,
                       SeparableL1Term, TabulatedCpwaCost,
                       axis_arrangement_candidates, unique_edges)


class OracleError(RuntimeError):
    pass


class WrongCostModelError(OracleError):
    pass


class ZeroTauError(OracleError):
    """The grid oracle cannot certify tau = 0."""


@dataclass
class OracleResult:
    x: np.ndarray
    z: np.ndarray
    beta_tilde: float
    g_at_x: np.ndarray
    h_at_z: np.ndarray
    beta_lower: float
    pool: list = field(default_factory=list)   # (x, z) pairs incl. the optimum


def _vertex_multipliers(basis, coeffs):
    """Per-vertex values of <g(.), coeffs>, zero at the excluded vertex."""
    out = np.zeros(basis.complex.n_vertices)
    out[basis._keep] = coeffs
    return out


def _finalize(model, i, x_basis, z_basis, y, w, x, z, pool_pairs, beta_lower=None):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    g = x_basis.eval(x)
    h = z_basis.eval(z)
    beta = float(model.eval(i, x[None, :], z[None, :])[0] - g @ y - h @ w)
    return OracleResult(
        x=x, z=z, beta_tilde=beta, g_at_x=g, h_at_z=h,
        beta_lower=beta if beta_lower is None else min(beta_lower, beta),
        pool=pool_pairs)


def _pool_from_matrix(xs, zs, vals, margin, cap):
    # the pool keeps everything within the margin and tops up with the next
    # best candidates until the cap; extra cuts are harmless (grow-only LP)
    # and markedly reduce the number of outer iterations
    flat = vals.ravel()
    best = flat.min()
    idx = np.argsort(flat, kind="stable")[:cap]
    nz = vals.shape[1]
    return [(xs[k // nz], zs[k % nz]) for k in idx], best, np.unravel_index(
        int(flat.argmin()), vals.shape)


def _enumeration_oracle(model, i, x_space, x_basis, z_space, z_basis, y, w,
                        margin, cap):
    """Exact oracle by enumeration over vertex/point pairs.

    Valid whenever the objective restricted to every cell pair attains its
    minimum at a vertex pair: finite spaces, and tabulated costs (biaffine
    on each cell pair).
    """
    xs = x_space.vertices
    zs = z_space.vertices
    Yv = _vertex_multipliers(x_basis, y)
    Wv = _vertex_multipliers(z_basis, w)
    if isinstance(model, TabulatedCpwaCost):
        C = model.tables[i]
    else:
        nx, nz = len(xs), len(zs)
        XX = np.repeat(xs, nz, axis=0)
        ZZ = np.tile(zs, (nx, 1))
        C = model.eval(i, XX, ZZ).reshape(nx, nz)
    vals = C - Yv[:, None] - Wv[None, :]
    pool, best, (bi, bj) = _pool_from_matrix(xs, zs, vals, margin, cap)
    return _finalize(model, i, x_basis, z_basis, y, w, xs[bi], zs[bj], pool,
                     beta_lower=float(best))


def _side_minima(space, basis, coeffs, anchor, weight, cache, cache_key):
    """Candidates and values of weight*||. - anchor||_1 - <g(.), coeffs>.

    Returns (points, values) over the exact candidate set for this anchor.
    Basis values at the static candidate set are cached across oracle calls.
    """
    if cache_key not in cache:
        if anchor is None or isinstance(space, FiniteSpace):
            cand = space.vertices
        else:
            cand = axis_arrangement_candidates(space, np.atleast_2d(anchor))
        G = basis.eval_many(cand)
        cache[cache_key] = (cand, G)
    cand, G = cache[cache_key]
    vals = -G @ coeffs
    if anchor is not None and weight != 0.0:
        vals = vals + weight * np.abs(cand - np.asarray(anchor)).sum(axis=1)
    return cand, vals


def _cell_vertex_arrays(space):
    """Per-cell vertex coordinates and indices, treating a finite space as a
    collection of single-point cells."""
    if isinstance(space, FiniteSpace):
        pts = space.vertices[:, None, :]
        idx = np.arange(space.n_vertices)[:, None]
        return pts, idx
    return space._cell_pts, space.simplices


def _coupled_term_blocks(term, x_space, z_space, Yv, Wv):
    """Batched per-cell-pair LPs for a coupled convex term.

    Each block minimizes the term plus the per-cell affine multiplier parts
    over one (x-cell, z-cell) pair in barycentric variables.  Returns the
    block LP plus bookkeeping to map solutions back to points.
    """
    xp, xi = _cell_vertex_arrays(x_space)
    zp, zi = _cell_vertex_arrays(z_space)
    blk = BlockLp()
    meta = []
    for cx in range(len(xp)):
        Vx = xp[cx]                     # (kx, d)
        yv = Yv[xi[cx]]
        kx = Vx.shape[0]
        for cz in range(len(zp)):
            Vz = zp[cz]
            wv = Wv[zi[cz]]
            kz = Vz.shape[0]
            if isinstance(term, DirectL1Term):
                d = Vx.shape[1]
                nv = kx + kz + d
                c = np.concatenate([-yv, -wv, np.full(d, term.weight)])
                ub = []
                for l in range(d):
                    colsx = list(range(kx))
                    colsz = list(range(kx, kx + kz))
                    cola = [kx + kz + l]
                    ub.append((colsx + colsz + cola,
                               list(Vx[:, l]) + list(-Vz[:, l]) + [-1.0], 0.0))
                    ub.append((colsx + colsz + cola,
                               list(-Vx[:, l]) + list(Vz[:, l]) + [-1.0], 0.0))
            elif isinstance(term, ScalarRampTerm):
                nv = kx + kz + 1
                c = np.concatenate([-yv, -wv, [term.slope]])
                sz = Vz @ term.s
                colsx = list(range(kx))
                colsz = list(range(kx, kx + kz))
                colr = [kx + kz]
                ub = [
                    (colsx + colsz + colr,
                     list(Vx[:, 0]) + list(-sz) + [-1.0], term.kappa1),
                    (colsx + colsz + colr,
                     list(-Vx[:, 0]) + list(sz) + [-1.0], term.kappa1),
                ]
            else:
                raise WrongCostModelError("unknown coupled term %r" % term)
            eq = [(list(range(kx)), [1.0] * kx, 1.0),
                  (list(range(kx, kx + kz)), [1.0] * kz, 1.0)]
            blk.add_block(c, ub, eq, 0.0)
            meta.append((cx, cz, kx, kz))
    return blk, meta, xp, zp


def oracle_cell_cpwa(model, i, x_space, x_basis, z_space, z_basis, y, w,
                     tau=0.0, pool_margin=0.0, pool_cap=32, _cache=None):
    """Exact oracle for costs that are minima of convex CPWA terms.

    Separable terms are minimized by direct evaluation on their kink
    arrangement candidate sets; coupled terms (direct city-block distance,
    scalar ramps) by one batched LP over all cell pairs.  The certified
    bound equals the returned value (tau plays no role).
    """
    if model.kind == "tabulated" or (isinstance(x_space, FiniteSpace)
                                     and isinstance(z_space, FiniteSpace)):
        return _enumeration_oracle(model, i, x_space, x_basis, z_space,
                                   z_basis, y, w, pool_margin, pool_cap)
    if model.kind != "cpwa-pieces":
        raise WrongCostModelError("cost model lacks a cpwa piece decomposition")
    cache = _cache if _cache is not None else {}
    terms = model.oracle_terms(i)
    candidates = []     # (value, x, z)

    def _anchor_key(side, anchor, space):
        a = None if anchor is None else tuple(np.round(anchor, 12))
        return (side, a, id(space))

    for t_idx, term in enumerate(terms):
        if isinstance(term, SeparableL1Term):
            cx, vx = _side_minima(x_space, x_basis, y, term.anchor_x,
                                  term.weight_x, cache,
                                  _anchor_key("x", term.anchor_x, x_space))
            cz, vz = _side_minima(z_space, z_basis, w, term.anchor_z,
                                  term.weight_z, cache,
                                  _anchor_key("z", term.anchor_z, z_space))
            kx = np.argsort(vx)[:8]
            kz = np.argsort(vz)[:8]
            for a in kx:
                for b in kz:
                    candidates.append((vx[a] + vz[b] + term.const, cx[a], cz[b]))
        else:
            blk, meta, xp, zp = _coupled_term_blocks(
                term, x_space, z_space,
                _vertex_multipliers(x_basis, y), _vertex_multipliers(z_basis, w))
            vals, xs = blk.solve()
            order = np.argsort(vals)[:max(pool_cap, 8)]
            for b in order:
                cx_, cz_, kx_, kz_ = meta[b]
                lam = xs[b][:kx_]
                mu = xs[b][kx_:kx_ + kz_]
                xpt = lam @ xp[cx_]
                zpt = mu @ zp[cz_]
                candidates.append((vals[b], xpt, zpt))

    candidates.sort(key=lambda t: t[0])
    best_val, bx, bz = candidates[0]
    pool, seen = [], set()
    for v, px, pz in candidates:
        if len(pool) >= pool_cap:
            break
        key = (tuple(np.round(np.atleast_1d(px), 12)),
               tuple(np.round(np.atleast_1d(pz), 12)))
        if key in seen:
            continue
        seen.add(key)
        pool.append((np.atleast_1d(px), np.atleast_1d(pz)))
    return _finalize(model, i, x_basis, z_basis, y, w, bx, bz, pool,
                     beta_lower=float(best_val))


class _ZFaces:
    """Face data of a quality complex for closed-form quadratic minimization:
    vertices, unique edges, and per-cell affine interpolation data."""

    def __init__(self, complex):
        self.vertices = complex.vertices
        self.edges = unique_edges(complex)
        self.e0 = self.vertices[self.edges[:, 0]]
        self.de = self.vertices[self.edges[:, 1]] - self.e0
        self.de2 = (self.de ** 2).sum(1)
        self.cells = complex.simplices
        self.minv = complex._minv

    def affine_coeffs(self, Wv):
        """Per-cell (a_C, b_C) with <h(z), w> = a_C + <b_C, z> on cell C."""
        vals = Wv[self.cells]                        # (m, d+1)
        a = np.einsum("mk,mk->m", vals, self.minv[:, :, 0])
        b = np.einsum("mk,mkd->md", vals, self.minv[:, :, 1:])
        return a, b


def _get_zfaces(z_space):
    # derived face data rides on the complex itself: id()-keyed module
    # caches can alias recycled objects after garbage collection
    faces = getattr(z_space, "_zfaces", None)
    if faces is None:
        faces = _ZFaces(z_space)
        z_space._zfaces = faces
    return faces


def oracle_quadratic(model, i, x_space, x_basis, z_space, z_basis, y, w,
                     tau=0.0, pool_margin=0.0, pool_cap=32):
    """Exact oracle for the squared-distance barycenter cost.

    The cost is affine in x for fixed z, so the x-minimum over each cell sits
    at a vertex; for each x-vertex the strictly convex quadratic in z is
    minimized in closed form over every face (vertices, open edges, open
    cells) of the quality complex.
    """
    if not isinstance(model, QuadraticBarycenterCost):
        raise WrongCostModelError("oracle_quadratic needs the quadratic "
                                  "barycenter cost model")
    lam = model.lam[i]
    xs = x_space.vertices                              # (nx, d)
    Yx = _vertex_multipliers(x_basis, y)
    Wv = _vertex_multipliers(z_basis, w)

    if isinstance(z_space, FiniteSpace):
        zs = z_space.vertices
        vals = (lam * ((zs ** 2).sum(1)[None, :] - 2.0 * xs @ zs.T)
                - Wv[None, :] - Yx[:, None])
        pool, best, (bi, bj) = _pool_from_matrix(xs, zs, vals, pool_margin,
                                                 pool_cap)
        return _finalize(model, i, x_basis, z_basis, y, w, xs[bi], zs[bj],
                         pool, beta_lower=float(best))

    faces = _get_zfaces(z_space)
    V0 = faces.vertices
    aC, bC = faces.affine_coeffs(Wv)

    def q(X, Z):
        # lam (||z||^2 - 2 <x, z>) broadcast over matching leading shape
        return lam * ((Z ** 2).sum(-1) - 2.0 * (X * Z).sum(-1))

    cand_vals = []
    cand_pts = []
    # vertices
    vv = q(xs[:, None, :], V0[None]) - Wv[None, :]
    cand_vals.append(vv)
    cand_pts.append(np.broadcast_to(V0[None], (len(xs),) + V0.shape))
    # open edges: hat restricted to an edge is the 1d barycentric pair
    w1 = Wv[faces.edges[:, 0]]
    w2 = Wv[faces.edges[:, 1]]
    num = ((xs[:, None, :] - faces.e0[None]) * faces.de[None]).sum(-1) \
        + (w2 - w1)[None] / (2.0 * lam)
    t = num / faces.de2[None]
    interior = (t > 1e-12) & (t < 1 - 1e-12)
    tcl = np.clip(t, 0.0, 1.0)
    zedge = faces.e0[None] + tcl[..., None] * faces.de[None]
    ve = q(xs[:, None, :], zedge) - (w1[None] + tcl * (w2 - w1)[None])
    ve = np.where(interior, ve, np.inf)
    cand_vals.append(ve)
    cand_pts.append(zedge)
    # open cells: unconstrained minimizer of the quadratic minus the affine part
    zcell = xs[:, None, :] + bC[None] / (2.0 * lam)
    lamc = np.einsum("mkl,nml->nmk", faces.minv[:, :, 1:], zcell) \
        + faces.minv[None, :, :, 0]
    inside = lamc.min(-1) > 1e-12
    vc = q(xs[:, None, :], zcell) - (aC[None] + (bC[None] * zcell).sum(-1))
    vc = np.where(inside, vc, np.inf)
    cand_vals.append(vc)
    cand_pts.append(zcell)

    allv = np.concatenate([v for v in cand_vals], axis=1) - Yx[:, None]
    allp = np.concatenate([p for p in cand_pts], axis=1)
    flat = allv.ravel()
    best = int(flat.argmin())
    nz = allv.shape[1]
    bx, bz = xs[best // nz], allp[best // nz, best % nz]
    idx = np.argsort(flat, kind="stable")
    idx = idx[np.isfinite(flat[idx])][:pool_cap]
    pool = [(xs[k // nz], allp[k // nz, k % nz]) for k in idx]
    return _finalize(model, i, x_basis, z_basis, y, w, bx, bz, pool,
                     beta_lower=float(flat[best]))


def _simplex_lattice(q, d):
    """Barycentric lattice with denominator q on a d-simplex."""
    if d == 1:
        k = np.arange(q + 1)
        return np.stack([q - k, k], axis=1) / q
    pts = []
    def rec(prefix, remaining, slots):
        if slots == 1:
            pts.append(prefix + [remaining])
            return
        for v in range(remaining + 1):
            rec(prefix + [v], remaining - v, slots - 1)
    rec([], q, d + 1)
    return np.asarray(pts, dtype=float) / q


def _grad_bound(basis, coeffs):
    """Max cell gradient norm of <g(.), coeffs> over the complex."""
    if isinstance(basis.complex, FiniteSpace):
        return 0.0
    Yv = _vertex_multipliers(basis, coeffs)
    worst = 0.0
    for s, idx in enumerate(basis.complex.simplices):
        G = basis.complex._minv[s][:, 1:]
        worst = max(worst, float(np.linalg.norm(Yv[idx] @ G)))
    return worst


def _grid_points(space, delta):
    """Lattice points covering the space with radius at most delta."""
    if isinstance(space, FiniteSpace):
        return space.vertices
    pts = []
    d = space.dim
    diam = space.cell_diameters()
    for s in range(space.n_simplices):
        q = max(1, int(np.ceil(diam[s] * (d + 1) / max(delta, 1e-15))))
        lam = _simplex_lattice(q, d)
        pts.append(lam @ space._cell_pts[s])
    return np.vstack(pts)


def oracle_lipschitz_grid(model, i, x_space, x_basis, z_space, z_basis, y, w,
                          tau, pool_margin=0.0, pool_cap=32):
    """Certified oracle from objective evaluations on a covering grid.

    The grid spacing is chosen so that the objective's Lipschitz modulus
    (cost constants plus the multiplier-dependent hat moduli) times the
    covering radii stays below tau; the certified bound is the grid minimum
    minus tau.
    """
    if tau <= 0:
        raise ZeroTauError("the grid oracle cannot certify tau = 0")
    Lx = model.L1[i] + _grad_bound(x_basis, y)
    Lz = model.L2[i] + _grad_bound(z_basis, w)
    dx = tau / (2.0 * Lx) if Lx > 0 else np.inf
    dz = tau / (2.0 * Lz) if Lz > 0 else np.inf
    Xg = _grid_points(x_space, dx)
    Zg = _grid_points(z_space, dz)
    Gx = x_basis.eval_many(Xg) @ y
    Hz = z_basis.eval_many(Zg) @ w
    best = np.inf
    bi = bj = 0
    pool_vals = []
    chunk = max(1, int(2e6 // max(len(Zg), 1)))
    for s0 in range(0, len(Xg), chunk):
        xs = Xg[s0:s0 + chunk]
        nx, nz = len(xs), len(Zg)
        C = model.eval(i, np.repeat(xs, nz, axis=0),
                       np.tile(Zg, (nx, 1))).reshape(nx, nz)
        vals = C - Gx[s0:s0 + chunk, None] - Hz[None, :]
        k = int(vals.argmin())
        if vals.ravel()[k] < best:
            best = float(vals.ravel()[k])
            bi, bj = s0 + k // nz, k % nz
        flat = vals.ravel()
        cut = np.flatnonzero(flat <= best + max(pool_margin, 0.0))
        for kk in cut[np.argsort(flat[cut])][:pool_cap]:
            pool_vals.append((float(flat[kk]), Xg[s0 + kk // nz], Zg[kk % nz]))
    pool_vals.sort(key=lambda t: t[0])
    pool = [(p[1], p[2]) for p in pool_vals
            if p[0] <= best + max(pool_margin, 0.0)][:pool_cap]
    res = _finalize(model, i, x_basis, z_basis, y, w, Xg[bi], Zg[bj], pool,
                    beta_lower=best - tau)
    res.beta_lower = res.beta_tilde - tau
    return res


def make_oracle(model, x_spaces, x_bases, z_space, z_basis,
                pool_margin=0.0, pool_cap=32):
    """Dispatching oracle callable with per-instance candidate caches.

    The returned function has the signature ``oracle(i, y, w, tau)`` and
    picks the exact oracle matching the cost model; distinct categories may
    be called concurrently (read-only shared state after warmup).
    """
    cache = {}

    def oracle(i, y, w, tau=0.0):
        if isinstance(model, QuadraticBarycenterCost):
            return oracle_quadratic(model, i, x_spaces[i], x_bases[i],
                                    z_space, z_basis, y, w, tau,
                                    pool_margin, pool_cap)
        return oracle_cell_cpwa(model, i, x_spaces[i], x_bases[i],
                                z_space, z_basis, y, w, tau,
                                pool_margin, pool_cap, _cache=cache)

    return oracle
