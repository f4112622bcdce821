"""Shared test fixtures: independent reference solvers and instance
generators.  These stay deliberately separate from the library paths they
check (dense brute force where the library is structured/sparse)."""

import itertools

import numpy as np
from scipy.optimize import linprog as scipy_linprog

from teamsolve.geometry import FiniteSpace, IndicatorBasis
from teamsolve.measures import DiscreteMeasure
from teamsolve.problems import tabulated_cpwa_cost


def brute_force_discrete_optimum(model, measures, x_spaces, z_space):
    """Exact optimum of the fully discrete matching problem by one dense LP
    over all couplings and the shared quality measure."""
    N = model.N
    zs = z_space.vertices
    nz = len(zs)
    sizes = [sp.n_vertices for sp in x_spaces]
    n_gamma = sum(s * nz for s in sizes)
    n = n_gamma + nz
    c = np.zeros(n)
    off = 0
    offsets = []
    for i in range(N):
        xs = x_spaces[i].vertices
        XX = np.repeat(xs, nz, axis=0)
        ZZ = np.tile(zs, (len(xs), 1))
        c[off:off + sizes[i] * nz] = model.eval(i, XX, ZZ)
        offsets.append(off)
        off += sizes[i] * nz
    rows = []
    rhs = []
    for i in range(N):
        xs = x_spaces[i].vertices
        mu_w = np.zeros(sizes[i])
        for a, w in zip(measures[i].atoms, measures[i].weights):
            mu_w[x_spaces[i].locate(a)] += w
        for v in range(sizes[i]):
            row = np.zeros(n)
            row[offsets[i] + v * nz: offsets[i] + (v + 1) * nz] = 1.0
            rows.append(row)
            rhs.append(mu_w[v])
        for q in range(nz):
            row = np.zeros(n)
            row[offsets[i] + q: offsets[i] + sizes[i] * nz: nz] = 1.0
            row[n_gamma + q] = -1.0
            rows.append(row)
            rhs.append(0.0)
    row = np.zeros(n)
    row[n_gamma:] = 1.0
    rows.append(row)
    rhs.append(1.0)
    res = scipy_linprog(c, A_eq=np.asarray(rows), b_eq=np.asarray(rhs),
                        bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(res.fun)


def enumerate_vertices_max(c, A_ub, b_ub, A_eq=None, b_eq=None, tol=1e-9):
    """Optimal value of a bounded max LP by brute-force basis enumeration."""
    c = np.asarray(c, dtype=float)
    n = len(c)
    rows = [(np.asarray(a, dtype=float), float(b), "ub")
            for a, b in zip(A_ub, b_ub)]
    if A_eq is not None:
        rows += [(np.asarray(a, dtype=float), float(b), "eq")
                 for a, b in zip(A_eq, b_eq)]
    best = -np.inf
    eq_idx = [k for k, r in enumerate(rows) if r[2] == "eq"]
    for combo in itertools.combinations(range(len(rows)), n):
        if any(k not in combo for k in eq_idx):
            continue
        A = np.stack([rows[k][0] for k in combo])
        b = np.asarray([rows[k][1] for k in combo])
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, b)
        feas = all(r[0] @ x <= r[1] + tol if r[2] == "ub"
                   else abs(r[0] @ x - r[1]) <= tol for r in rows)
        if feas:
            best = max(best, float(c @ x))
    return best


def random_bounded_lp(rng, n):
    """Random bounded-feasible max LP with free variables: box rows keep it
    bounded, extra random rows and a random equality add structure."""
    c = rng.normal(size=n)
    A_ub = np.vstack([np.eye(n), -np.eye(n),
                      rng.normal(size=(n, n))])
    b_ub = np.concatenate([np.full(2 * n, 2.0), rng.uniform(1, 3, size=n)])
    if n >= 3 and rng.uniform() < 0.5:
        A_eq = rng.normal(size=(1, n))
        x0 = rng.uniform(-0.5, 0.5, size=n)
        b_eq = A_eq @ x0
        return c, A_ub, b_ub, A_eq, b_eq
    return c, A_ub, b_ub, None, None


def random_discrete_instance(rng, N=None):
    """Random fully discrete matching instance with indicator bases."""
    if N is None:
        N = int(rng.integers(2, 4))
    x_spaces = []
    measures = []
    for _ in range(N):
        nx = int(rng.integers(2, 5))
        pts = np.sort(rng.uniform(0, 1, size=nx))[:, None]
        x_spaces.append(FiniteSpace(pts))
        w = rng.dirichlet(np.ones(nx))
        w = np.maximum(w, 1e-3)
        w /= w.sum()
        measures.append(DiscreteMeasure(pts, w))
    nz = int(rng.integers(2, 6))
    zs = np.sort(rng.uniform(0, 1, size=nz))[:, None]
    z_space = FiniteSpace(zs)
    tables = [rng.uniform(0, 1, size=(sp.n_vertices, nz)) for sp in x_spaces]
    model = tabulated_cpwa_cost(x_spaces, z_space, tables)
    x_bases = [IndicatorBasis(sp) for sp in x_spaces]
    z_basis = IndicatorBasis(z_space)
    return model, measures, x_spaces, x_bases, z_space, z_basis


def rebased_y(basis_from, basis_to, y):
    """Multipliers for a hat basis with a different excluded vertex giving
    the same potential up to an additive constant; returns (y', const) with
    <g'(x), y'> = <g(x), y> - const."""
    v0 = basis_from.excluded
    v1 = basis_to.excluded
    if v0 == v1:
        return y.copy(), 0.0
    cshift = y[basis_from.component_of(v1)]
    yp = np.zeros(basis_to.m)
    for v in range(basis_from.complex.n_vertices):
        comp = basis_to.component_of(v)
        if comp is None:
            continue
        if v == v0:
            yp[comp] = -cshift
        else:
            yp[comp] = y[basis_from.component_of(v)] - cshift
    return yp, cshift
