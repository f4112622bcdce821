"""Assembly of approximate matching equilibria from cutting-plane outputs.

Given the solver's feasible parametric solution and discrete dual measures,
this module builds the two candidate equilibria and their certificates:

* the discrete quality measure (the quality marginal of one dual measure),
  with coupled agent samples generated by a chain of conditional samplers --
  quality-to-quality W1 coupling, the dual disintegration, then a W1
  coupling onto the true agent measure;
* the pushforward quality measure obtained by mapping coupled agent types
  through the cost-minimizing quality selector;
* Monte Carlo (or exact, for fully discrete data) upper bounds, the lower
  bound inherited from the solver, the sub-optimality certificates (upper
  minus lower), and the a-priori certificate from Lipschitz constants and
  mesh radii.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import FiniteSpace, epsilon_bar
from .linprog import solve_min
from .measures import (CpwaDensityMeasure, DiscreteMeasure, moment_vector,
                       spawn_rngs)
from .oracle import _get_zfaces, _vertex_multipliers
from .problems import QuadraticBarycenterCost, TabulatedCpwaCost
from .transport import ot_discrete, ot_quantile_1d, ot_semidiscrete

log = logging.getLogger("teamsolve.equilibrium")

TIE_TOL = 1e-12


class EquilibriumError(RuntimeError):
    pass


class UnsupportedMeasureClassError(EquilibriumError):
    pass


# ---------------------------------------------------------------------------
# quality selector

def _lex_argmin(points, values, valid):
    """Per-sample argmin with lexicographic tie-break on the point coords."""
    vals = np.where(valid, values, np.inf)
    best = vals.min(axis=1, keepdims=True)
    tied = vals <= best + TIE_TOL
    # rank candidates lexicographically per sample and pick the smallest tied
    n, p, d = points.shape
    choice = np.empty(n, dtype=int)
    for s in range(n):
        idx = np.flatnonzero(tied[s])
        pts = points[s, idx]
        order = np.lexsort(pts.T[::-1])
        choice[s] = idx[order[0]]
    return choice


def z_opt(model, x_list, z_space, chunk=4096):
    """Global minimizer of z -> sum_i c_i(x_i, z) over the quality space.

    Vectorized over samples; ``x_list`` holds one (n, d_i) array per
    category.  Exact for the shipped cost families; ties are broken by the
    lexicographically smallest minimizer among the candidate points.
    """
    x_list = [np.atleast_2d(np.asarray(X, dtype=float)) for X in x_list]
    n = x_list[0].shape[0]
    if isinstance(z_space, FiniteSpace):
        zs = z_space.vertices
        vals = np.zeros((n, len(zs)))
        for i in range(model.N):
            XX = np.repeat(x_list[i], len(zs), axis=0)
            ZZ = np.tile(zs, (n, 1))
            vals += model.eval(i, XX, ZZ).reshape(n, len(zs))
        pts = np.broadcast_to(zs[None], (n,) + zs.shape)
        return zs[_lex_argmin(pts, vals, np.ones_like(vals, dtype=bool))]
    if isinstance(model, QuadraticBarycenterCost):
        return _z_opt_quadratic(model, x_list, z_space)
    if isinstance(model, TabulatedCpwaCost):
        zs = z_space.vertices
        vals = np.zeros((n, len(zs)))
        for i in range(model.N):
            vals += model.z_vertex_costs(i, x_list[i])
        pts = np.broadcast_to(zs[None], (n,) + zs.shape)
        return zs[_lex_argmin(pts, vals, np.ones_like(vals, dtype=bool))]
    # min-of-convex-terms families: exact candidate arrangements per sample
    out = np.empty((n, z_space.dim))
    for s0 in range(0, n, chunk):
        sl = slice(s0, min(s0 + chunk, n))
        xs = [X[sl] for X in x_list]
        cand, valid = model.z_opt_candidates(xs, z_space)
        k = cand.shape[1]
        vals = np.zeros((sl.stop - s0, k))
        for i in range(model.N):
            XX = np.repeat(xs[i], k, axis=0)
            vals += model.eval(i, XX, cand.reshape(-1, z_space.dim)
                               ).reshape(-1, k)
        out[sl] = cand[np.arange(cand.shape[0])[:, None],
                       _lex_argmin(cand, vals, valid)[:, None], :].squeeze(1)
    return out


def _z_opt_quadratic(model, x_list, z_space):
    """Weighted mean, projected onto the quality complex where needed."""
    xbar = np.zeros_like(x_list[0])
    for i in range(model.N):
        xbar += model.lam[i] * x_list[i]
    from .problems import contains_many
    inside = contains_many(z_space, xbar)
    out = xbar.copy()
    if not inside.all():
        if z_space.dim > 2:
            raise EquilibriumError(
                "quality selector needs the quality space to contain the "
                "weighted type means in dimension > 2")
        faces = _get_zfaces(z_space)
        xs = xbar[~inside]
        # closed edges plus vertices cover the boundary, where the projected
        # minimizer of the strictly convex quadratic must lie
        vv = ((faces.vertices ** 2).sum(1)[None, :]
              - 2.0 * xs @ faces.vertices.T)
        num = ((xs[:, None, :] - faces.e0[None]) * faces.de[None]).sum(-1)
        t = np.clip(num / faces.de2[None], 0.0, 1.0)
        ze = faces.e0[None] + t[..., None] * faces.de[None]
        ve = (ze ** 2).sum(-1) - 2.0 * np.einsum("nd,ned->ne", xs, ze)
        pts = np.concatenate(
            [np.broadcast_to(faces.vertices[None],
                             (len(xs),) + faces.vertices.shape), ze], axis=1)
        vals = np.concatenate([vv, ve], axis=1)
        pick = _lex_argmin(pts, vals, np.ones_like(vals, dtype=bool))
        out[~inside] = pts[np.arange(len(xs)), pick]
    return out


# ---------------------------------------------------------------------------
# transfer functions

def transfer_eval(model, i, Z, solution, x_spaces, x_bases):
    """Transfer function of category i on a batch of quality points.

    For i < N-1 this is the exact infimum over the type space of the cost
    minus the parametrized potential; the last category is the negative sum
    of the others, making the family sum to zero identically.
    """
    N = model.N
    if not 0 <= i < N:
        raise EquilibriumError("category index out of range")
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if i == N - 1:
        tot = np.zeros(Z.shape[0])
        for j in range(N - 1):
            tot += transfer_eval(model, j, Z, solution, x_spaces, x_bases)
        return -tot
    y0 = solution.y0[i]
    y = solution.y[i]
    basis = x_bases[i]
    space = x_spaces[i]
    if isinstance(model, (QuadraticBarycenterCost, TabulatedCpwaCost)) \
            or isinstance(space, FiniteSpace):
        cand = space.vertices
        Yc = _vertex_multipliers(basis, y)
        nz, nc = Z.shape[0], len(cand)
        C = model.eval(i, np.repeat(cand, nz, axis=0),
                       np.tile(Z, (nc, 1))).reshape(nc, nz)
        return (C - Yc[:, None]).min(axis=0) - y0
    out = np.empty(Z.shape[0])
    for s, z in enumerate(Z):
        cand = model.transfer_x_candidates(i, z, space)
        g = basis.eval_many(cand)
        vals = model.eval(i, cand, np.broadcast_to(z, (len(cand), len(z)))) \
            - g @ y
        out[s] = vals.min() - y0
    return out


def make_transfer_functions(model, solution, x_spaces, x_bases):
    """List of per-category callables evaluating the transfer functions."""
    def make(i):
        return lambda Z: transfer_eval(model, i, Z, solution, x_spaces,
                                       x_bases)
    return [make(i) for i in range(model.N)]


# ---------------------------------------------------------------------------
# a-priori certificate

def eps_theo(eps_lsip, L1, L2, w1_radius_x, w1_radius_h, i_hat):
    """A-priori sub-optimality certificate from Lipschitz constants and the
    W1 radii of the mesh moment classes."""
    L1 = np.atleast_1d(np.asarray(L1, dtype=float))
    L2 = np.atleast_1d(np.asarray(L2, dtype=float))
    rx = np.atleast_1d(np.asarray(w1_radius_x, dtype=float))
    other = np.delete(np.arange(len(L2)), i_hat)
    return float(eps_lsip + (L1 * rx).sum() + L2[other].sum() * w1_radius_h)


# ---------------------------------------------------------------------------
# the equilibrium report and its construction

@dataclass
class EquilibriumReport:
    nu_hat: DiscreteMeasure
    i_hat: int
    alpha_lb: float
    alpha_hat_ub: float
    alpha_hat_se: float
    alpha_tilde_ub: float
    alpha_tilde_se: float
    eps_hat_sub: float
    eps_tilde_sub: float
    eps_theo: float
    shift: float
    exact: bool
    mc_n: int
    mc_repetitions: int
    seed: int
    sparsity_bound: int
    support_reduced: bool = False
    transfer: list = field(default_factory=list, repr=False)
    _chain: object = field(default=None, repr=False)

    def sample_streams(self, rng, n):
        """Coupled sample streams: dict with Z, Z_bar, and per-category
        X_bar arrays (the laws of the two couplings and both quality
        measures)."""
        return self._chain.sample(rng, n)

    def to_json(self):
        return {
            "i_hat": int(self.i_hat),
            "alpha_lb": self.alpha_lb,
            "alpha_hat_ub": self.alpha_hat_ub,
            "alpha_hat_se": self.alpha_hat_se,
            "alpha_tilde_ub": self.alpha_tilde_ub,
            "alpha_tilde_se": self.alpha_tilde_se,
            "eps_hat_sub": self.eps_hat_sub,
            "eps_tilde_sub": self.eps_tilde_sub,
            "eps_theo": self.eps_theo,
            "objective_shift": self.shift,
            "exact_expectations": bool(self.exact),
            "mc": {"n": int(self.mc_n), "repetitions": int(self.mc_repetitions),
                   "seed": int(self.seed)},
            "nu_hat": {"atoms": self.nu_hat.atoms.tolist(),
                       "weights": self.nu_hat.weights.tolist()},
            "sparsity_bound": int(self.sparsity_bound),
            "support_reduced": bool(self.support_reduced),
        }


class _SamplerChain:
    """Vectorized conditional sampler chain behind the coupled streams."""

    def __init__(self, model, nu_hat, z_couplings, cond_x, xbar_couplings,
                 mu_hat_atoms, z_space):
        self.model = model
        self.nu_hat = nu_hat
        self.z_couplings = z_couplings          # per i: DiscreteCoupling
        self.cond_x = cond_x                    # per i: rows aligned to nu_i
        self.xbar_couplings = xbar_couplings    # per i: coupling or None
        self.mu_hat_atoms = mu_hat_atoms        # per i
        self.z_space = z_space

    def sample(self, rng, n, with_zbar=True):
        a = rng.choice(self.nu_hat.n_atoms, size=n, p=self.nu_hat.weights)
        Z = self.nu_hat.atoms[a]
        Xbars = []
        for i in range(self.model.N):
            _, b = self.z_couplings[i].sample_given_source(rng, a)
            atoms_rows, cum_rows = self.cond_x[i]
            u = rng.uniform(size=n)
            xi_idx = np.empty(n, dtype=int)
            for zb in np.unique(b):
                mask = b == zb
                cum = cum_rows[zb]
                cols = np.minimum((u[mask, None] > cum[None, :]).sum(1),
                                  len(cum) - 1)
                xi_idx[mask] = atoms_rows[zb][cols]
            coup = self.xbar_couplings[i]
            if coup is None:
                Xb = self.mu_hat_atoms[i][xi_idx]
            else:
                Xb = coup.sample_given_source(rng, xi_idx)
                if isinstance(Xb, tuple):
                    Xb = Xb[0]
            Xbars.append(Xb)
        out = {"Z": Z, "X_bar": Xbars}
        if with_zbar:
            out["Z_bar"] = z_opt(self.model, Xbars, self.z_space)
        return out


def _reduce_support(atoms, weights, z_basis, cap):
    """Re-express a discrete quality measure on at most k+1 atoms of its own
    support while preserving its test-function moments (basic solution of
    the moment system)."""
    H = z_basis.eval_many(atoms)
    target = weights @ H
    n = len(weights)
    A_eq = np.vstack([np.ones((1, n)), H.T])
    b_eq = np.concatenate([[1.0], target])
    c = np.linalg.norm(atoms, axis=1)    # any objective; a vertex is enough
    res = solve_min(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None))
    w = np.clip(res.x, 0.0, None)
    keep = np.flatnonzero(w > 1e-12)
    if len(keep) > cap:
        keep = np.argsort(w)[::-1][:cap]
    w = w[keep] / w[keep].sum()
    return atoms[keep], w


def construct(cp_result, model, measures, x_spaces, x_bases, z_space,
              z_basis, mc_n=100000, mc_repetitions=20, seed=0,
              i_hat="auto", exact="auto", compute_tilde=True,
              semidiscrete_params=None, exact_combo_cap=200000):
    """Build the equilibrium report from cutting-plane outputs.

    ``i_hat`` selects the reference dual measure: ``"auto"`` picks the
    category whose quality marginal minimizes the summed W1 distance to the
    others; an integer pins it.  ``exact`` switches exact finite-support
    expectation evaluation (``"auto"``: on when every agent measure is
    discrete and the enumeration stays below ``exact_combo_cap``).
    """
    N = model.N
    duals = cp_result.duals
    nu_parts = [duals.z_marginal(i) for i in range(N)]
    nu_measures = [DiscreteMeasure(a, w) for a, w in nu_parts]

    if i_hat == "auto":
        if N == 1:
            i_hat = 0
        else:
            dsum = np.zeros(N)
            for i in range(N):
                for j in range(N):
                    if i != j:
                        dsum[i] += ot_discrete(nu_measures[i],
                                               nu_measures[j])[1]
            i_hat = int(np.argmin(dsum))
    i_hat = int(i_hat)

    m_list = [b.m for b in x_bases]
    bound = int(min(m_list) + z_basis.m + 2)
    nu_atoms, nu_w = nu_parts[i_hat]
    reduced = False
    if len(nu_w) > bound:
        nu_atoms, nu_w = _reduce_support(nu_atoms, nu_w, z_basis, bound)
        reduced = True
        log.info("quality support reduced to %d atoms", len(nu_w))
    nu_hat = DiscreteMeasure(nu_atoms, nu_w)

    # quality-to-quality couplings
    z_couplings = [ot_discrete(nu_hat, nu_measures[i])[0] for i in range(N)]

    # dual disintegration, aligned with each nu_i's atom order
    cond_x = []
    mu_hat_atoms = []
    for i in range(N):
        rows = duals.conditional_x_given_z(i)
        zatoms = nu_parts[i][0]
        zkey = {tuple(np.round(z, 12)): q for q, z in enumerate(zatoms)}
        atoms_rows = [None] * len(zatoms)
        cum_rows = [None] * len(zatoms)
        mh_atoms, mh_w = duals.x_marginal(i)
        mu_hat_atoms.append(mh_atoms)
        xkey = {tuple(np.round(x, 12)): q for q, x in enumerate(mh_atoms)}
        for z, xs, probs in rows:
            q = zkey[tuple(np.round(z, 12))]
            atoms_rows[q] = np.asarray([xkey[tuple(np.round(x, 12))]
                                        for x in xs], dtype=int)
            cum_rows[q] = np.cumsum(probs)
        cond_x.append((atoms_rows, cum_rows))

    # couplings onto the true agent measures
    sd_params = dict(semidiscrete_params or {})
    rng_master = np.random.SeedSequence(seed)
    setup_rngs = spawn_rngs(seed ^ 0x5EED, N)
    xbar_couplings = []
    all_discrete = True
    for i in range(N):
        mu_hat = DiscreteMeasure(mu_hat_atoms[i],
                                 duals.x_marginal(i)[1])
        mu = measures[i]
        if isinstance(mu, DiscreteMeasure):
            xbar_couplings.append(ot_discrete(mu_hat, mu)[0])
        elif isinstance(mu, CpwaDensityMeasure) and mu.dim == 1:
            xbar_couplings.append(ot_quantile_1d(mu_hat, mu))
            all_discrete = False
        elif isinstance(mu, CpwaDensityMeasure):
            xbar_couplings.append(ot_semidiscrete(
                mu_hat, mu, rng=setup_rngs[i], **sd_params))
            all_discrete = False
        else:
            raise UnsupportedMeasureClassError(
                "measure %d of type %r" % (i, type(mu)))

    chain = _SamplerChain(model, nu_hat, z_couplings, cond_x, xbar_couplings,
                          mu_hat_atoms, z_space)

    use_exact = (exact is True) or (exact == "auto" and all_discrete)
    if use_exact:
        ok, hat, tilde = _exact_bounds(model, chain, measures, z_space,
                                       compute_tilde, exact_combo_cap)
        if not ok and exact is True:
            raise EquilibriumError("exact evaluation exceeds the enumeration cap")
        use_exact = ok
    if use_exact:
        alpha_hat, alpha_hat_se = hat, 0.0
        alpha_tilde, alpha_tilde_se = tilde, 0.0
    else:
        reps = spawn_rngs(seed, mc_repetitions)
        hats = np.empty(mc_repetitions)
        tildes = np.full(mc_repetitions, np.nan)
        for r, rng in enumerate(reps):
            S = chain.sample(rng, mc_n, with_zbar=compute_tilde)
            hat_v = 0.0
            tilde_v = 0.0
            for i in range(N):
                hat_v += model.eval(i, S["X_bar"][i], S["Z"]).mean()
                if compute_tilde:
                    tilde_v += model.eval(i, S["X_bar"][i], S["Z_bar"]).mean()
            hats[r] = hat_v
            if compute_tilde:
                tildes[r] = tilde_v
        alpha_hat = float(hats.mean())
        alpha_hat_se = float(hats.std(ddof=1) / np.sqrt(mc_repetitions)) \
            if mc_repetitions > 1 else 0.0
        if compute_tilde:
            alpha_tilde = float(np.nanmean(tildes))
            alpha_tilde_se = float(np.nanstd(tildes, ddof=1)
                                   / np.sqrt(mc_repetitions)) \
                if mc_repetitions > 1 else 0.0
        else:
            alpha_tilde, alpha_tilde_se = np.nan, np.nan

    alpha_lb = cp_result.alpha_lb
    radii_x = [0.0 if isinstance(sp, FiniteSpace) else epsilon_bar(sp, 0.0)
               for sp in x_spaces]
    radius_h = 0.0 if isinstance(z_space, FiniteSpace) \
        else epsilon_bar(z_space, 0.0)
    theo = eps_theo(cp_result.eps_lsip or cp_result.gap, model.L1, model.L2,
                    radii_x, radius_h, i_hat)

    shift = getattr(model, "shift", 0.0)
    return EquilibriumReport(
        nu_hat=nu_hat,
        i_hat=i_hat,
        alpha_lb=alpha_lb + shift,
        alpha_hat_ub=alpha_hat + shift,
        alpha_hat_se=alpha_hat_se,
        alpha_tilde_ub=(alpha_tilde + shift) if compute_tilde else np.nan,
        alpha_tilde_se=alpha_tilde_se,
        eps_hat_sub=alpha_hat - alpha_lb,
        eps_tilde_sub=(alpha_tilde - alpha_lb) if compute_tilde else np.nan,
        eps_theo=theo,
        shift=shift,
        exact=use_exact,
        mc_n=mc_n,
        mc_repetitions=mc_repetitions,
        seed=seed,
        sparsity_bound=bound,
        support_reduced=reduced,
        _chain=chain,
    )


def _exact_bounds(model, chain, measures, z_space, compute_tilde, combo_cap):
    """Exact expectations for fully discrete data by kernel-chain products."""
    N = model.N
    nu = chain.nu_hat
    na = nu.n_atoms
    # per category: conditional law of X_bar given the root quality atom
    kernels = []
    xbar_atoms = []
    for i in range(N):
        plan = chain.z_couplings[i].plan            # (na, nb)
        K1 = plan / plan.sum(axis=1, keepdims=True)
        atoms_rows, cum_rows = chain.cond_x[i]
        nb = len(atoms_rows)
        nx = len(chain.mu_hat_atoms[i])
        K2 = np.zeros((nb, nx))
        for b in range(nb):
            probs = np.diff(np.concatenate([[0.0], cum_rows[b]]))
            K2[b, atoms_rows[b]] += probs
        coup = chain.xbar_couplings[i]
        mu = measures[i]
        K3 = coup.plan / coup.plan.sum(axis=1, keepdims=True)
        kernels.append(K1 @ K2 @ K3)                # (na, n_mu_atoms)
        xbar_atoms.append(mu.atoms)
    hat = 0.0
    for i in range(N):
        M = nu.weights[:, None] * kernels[i]        # joint (Z, X_bar_i)
        nz, nx = M.shape
        C = model.eval(i, np.tile(xbar_atoms[i], (nz, 1)),
                       np.repeat(nu.atoms, nx, axis=0)).reshape(nz, nx)
        hat += float((M * C).sum())
    if not compute_tilde:
        return True, hat, np.nan
    total = 0
    for a in range(na):
        sizes = [int((kernels[i][a] > 1e-15).sum()) for i in range(N)]
        prod = 1
        for s in sizes:
            prod *= max(s, 1)
        total += prod
    if total > combo_cap:
        return False, hat, np.nan
    tilde = 0.0
    import itertools
    for a in range(na):
        supports = [np.flatnonzero(kernels[i][a] > 1e-15) for i in range(N)]
        for combo in itertools.product(*supports):
            p = nu.weights[a]
            for i in range(N):
                p *= kernels[i][a, combo[i]]
            if p <= 1e-300:
                continue
            xs = [xbar_atoms[i][combo[i]][None, :] for i in range(N)]
            zb = z_opt(model, xs, z_space)
            val = sum(float(model.eval(i, xs[i], zb)[0]) for i in range(N))
            tilde += p * val
    return True, hat, tilde


# ---------------------------------------------------------------------------
# diagnostics

def equilibrium_diagnostics(report, model, measures, x_spaces, x_bases,
                            z_space, z_basis, solution, rng, n=20000,
                            z_grid=None):
    """Empirical residuals of the equilibrium conditions.

    Returns a dict with the marginal moment mismatches of the coupled
    samples, the worst-case absolute sum of the transfer functions on a
    test grid (zero by construction), and the complementarity proxy based
    on a grid-approximated cost transform.
    """
    N = model.N
    S = report.sample_streams(rng, n)
    transfers = make_transfer_functions(model, solution, x_spaces, x_bases)
    if z_grid is None:
        z_grid = z_space.vertices
    out = {"marginal_x": [], "marginal_z": [], "zero_sum": 0.0,
           "complementarity": []}
    phi_grid = np.stack([transfers[i](z_grid) for i in range(N)])
    out["zero_sum"] = float(np.abs(phi_grid.sum(axis=0)).max())
    Hz_exact = report.nu_hat.weights @ z_basis.eval_many(report.nu_hat.atoms)
    Hz_emp = z_basis.eval_many(S["Z"]).mean(axis=0)
    for i in range(N):
        g_exact = moment_vector(measures[i], x_bases[i])
        g_emp = x_bases[i].eval_many(S["X_bar"][i]).mean(axis=0)
        out["marginal_x"].append(
            float(np.abs(g_emp - g_exact).max()) if g_exact.size else 0.0)
        out["marginal_z"].append(float(np.abs(Hz_emp - Hz_exact).max()))
        phi_z = transfers[i](S["Z"])
        cost = model.eval(i, S["X_bar"][i], S["Z"])
        # grid-approximated cost transform at the sampled types
        C = np.empty((n, len(z_grid)))
        for q0 in range(0, n, 4096):
            sl = slice(q0, min(q0 + 4096, n))
            k = sl.stop - sl.start
            C[sl] = model.eval(
                i, np.repeat(S["X_bar"][i][sl], len(z_grid), axis=0),
                np.tile(z_grid, (k, 1))).reshape(k, len(z_grid))
        phic = (C - phi_grid[i][None, :]).min(axis=1)
        out["complementarity"].append(
            float((cost - phi_z - phic).mean()))
    return out


# ---------------------------------------------------------------------------
# exports

def write_nu_hat_csv(report, path):
    import csv
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        d = report.nu_hat.atoms.shape[1]
        wr.writerow(["z%d" % j for j in range(d)] + ["weight"])
        for a, w in zip(report.nu_hat.atoms, report.nu_hat.weights):
            wr.writerow(["%.17g" % v for v in a] + ["%.17g" % w])


def write_coupling_csv(report, rng, n, i, path):
    import csv
    S = report.sample_streams(rng, n)
    X = S["X_bar"][i]
    Z = S["Z"]
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["x%d" % j for j in range(X.shape[1])]
                    + ["z%d" % j for j in range(Z.shape[1])])
        for xr, zr in zip(X, Z):
            wr.writerow(["%.17g" % v for v in xr] + ["%.17g" % v for v in zr])


def write_transfer_csv(model, solution, x_spaces, x_bases, z_points, i, path):
    import csv
    phi = transfer_eval(model, i, z_points, solution, x_spaces, x_bases)
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        d = np.atleast_2d(z_points).shape[1]
        wr.writerow(["z%d" % j for j in range(d)] + ["phi"])
        for z, v in zip(np.atleast_2d(z_points), phi):
            wr.writerow(["%.17g" % u for u in z] + ["%.17g" % v])


def write_nu_tilde_hist_csv(report, rng, n, path, bins=40):
    import csv
    S = report.sample_streams(rng, n)
    Zb = S["Z_bar"]
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        if Zb.shape[1] == 1:
            h, edges = np.histogram(Zb[:, 0], bins=bins)
            wr.writerow(["lo", "hi", "count"])
            for j in range(len(h)):
                wr.writerow(["%.17g" % edges[j], "%.17g" % edges[j + 1],
                             int(h[j])])
        else:
            h, ex, ey = np.histogram2d(Zb[:, 0], Zb[:, 1], bins=bins)
            wr.writerow(["x_lo", "x_hi", "y_lo", "y_hi", "count"])
            for a in range(h.shape[0]):
                for b in range(h.shape[1]):
                    wr.writerow(["%.17g" % ex[a], "%.17g" % ex[a + 1],
                                 "%.17g" % ey[b], "%.17g" % ey[b + 1],
                                 int(h[a, b])])


def write_report_json(report, path, extra=None):
    doc = report.to_json()
    if extra:
        doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
