import numpy as np
import pytest

from teamsolve.geometry import build_box_partition
from teamsolve.measures import CpwaDensityMeasure, DiscreteMeasure, random_cpwa
from teamsolve.transport import (CellMassMismatchError, SemidiscreteCoupling,
                                 TransportError, assignment_bruteforce_w1,
                                 ot_discrete, ot_quantile_1d, ot_semidiscrete,
                                 w1_quantile_quadrature)


def test_discrete_trivials():
    d0 = DiscreteMeasure([[0.0]], [1.0])
    d1 = DiscreteMeasure([[1.0]], [1.0])
    coup, w1 = ot_discrete(d0, d1)
    assert w1 == 1.0 and coup.plan[0, 0] == 1.0
    same = DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5])
    _, w0 = ot_discrete(same, same)
    assert abs(w0) < 1e-12
    split = DiscreteMeasure([[0.0], [2.0]], [0.5, 0.5])
    _, wc = ot_discrete(split, d1)
    assert abs(wc - 1.0) < 1e-12


def test_discrete_matches_assignment_enumeration():
    rng = np.random.default_rng(21)
    for n in (2, 3, 4, 5):
        a = rng.uniform(0, 1, (n, 2))
        b = rng.uniform(0, 1, (n, 2))
        u = np.ones(n) / n
        _, w1 = ot_discrete(DiscreteMeasure(a, u), DiscreteMeasure(b, u))
        ref = assignment_bruteforce_w1(a, b)
        assert abs(w1 - ref) < 1e-9


def test_discrete_marginals_exact():
    rng = np.random.default_rng(22)
    a = DiscreteMeasure(rng.uniform(0, 1, (4, 2)), rng.dirichlet(np.ones(4)))
    b = DiscreteMeasure(rng.uniform(0, 1, (6, 2)), rng.dirichlet(np.ones(6)))
    coup, _ = ot_discrete(a, b)
    assert np.abs(coup.plan.sum(1) - a.weights).max() < 1e-10
    assert np.abs(coup.plan.sum(0) - b.weights).max() < 1e-10


def test_metric_mismatch():
    d = DiscreteMeasure([[0.0]], [1.0])
    with pytest.raises(TransportError):
        ot_discrete(d, d, metric="manhattan")


def test_quantile_coupling_halves():
    rng = np.random.default_rng(23)
    half = DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5])
    U = CpwaDensityMeasure(build_box_partition([(0, 1)], (1,)), [1.0, 1.0])
    assert abs(w1_quantile_quadrature(half, U) - 0.25) < 1e-6
    coup = ot_quantile_1d(half, U)
    s, t = coup.sample_pairs(rng, 100000)
    # atom 0 spreads over the first quantile half, atom 1 over the second
    assert t[s[:, 0] == 0.0, 0].max() <= 0.5 + 1e-9
    assert t[s[:, 0] == 1.0, 0].min() >= 0.5 - 1e-9
    assert abs(np.abs(s[:, 0] - t[:, 0]).mean() - 0.25) < 0.005


def test_quantile_coupling_identity_and_center():
    rng = np.random.default_rng(24)
    same = DiscreteMeasure([[0.2], [0.8]], [0.3, 0.7])
    coup = ot_quantile_1d(same, same)
    s, t = coup.sample_pairs(rng, 20000)
    assert np.abs(s - t).max() < 1e-12
    U = CpwaDensityMeasure(build_box_partition([(0, 1)], (1,)), [1.0, 1.0])
    dm = DiscreteMeasure([[0.5]], [1.0])
    assert abs(w1_quantile_quadrature(dm, U) - 0.25) < 1e-6
    coup2 = ot_quantile_1d(dm, U)
    _, t2 = coup2.sample_pairs(rng, 100000)
    # conditional law of the target is the full uniform distribution
    assert abs(t2.mean() - 0.5) < 0.005
    assert abs((t2 <= 0.25).mean() - 0.25) < 0.01


def test_quantile_marginal_preservation():
    rng = np.random.default_rng(25)
    src = DiscreteMeasure([[0.1], [0.4], [0.9]], [0.2, 0.5, 0.3])
    tgt = random_cpwa(build_box_partition([(0, 1)], (3,)), rng)
    coup = ot_quantile_1d(src, tgt)
    s, t = coup.sample_pairs(rng, 100000)
    # source marginal: exact atom frequencies within binomial bands
    for a, w in zip(src.atoms[:, 0], src.weights):
        emp = (s[:, 0] == a).mean()
        assert abs(emp - w) < 4 * np.sqrt(w * (1 - w) / len(s))
    # target marginal: compare mean and cdf points against the measure
    ref = tgt.sample(rng, 100000)[:, 0]
    for q in (0.25, 0.5, 0.75):
        assert abs((t[:, 0] <= q).mean() - (ref <= q).mean()) < 0.01


def test_semidiscrete_single_atom():
    rng = np.random.default_rng(26)
    sq = build_box_partition([(0, 1), (0, 1)], (1, 1))
    usq = CpwaDensityMeasure(sq, np.ones(4))
    da = DiscreteMeasure([[0.5, 0.5]], [1.0])
    coup = ot_semidiscrete(da, usq, rng=rng, n_iterations=10)
    est = coup.cost_estimate(rng, 400000)
    assert abs(est - 0.3825978582) < 0.005


def test_semidiscrete_matches_1d_quantile():
    rng = np.random.default_rng(27)
    two = DiscreteMeasure([[0.25], [0.75]], [0.5, 0.5])
    U1 = CpwaDensityMeasure(build_box_partition([(0, 1)], (2,)), np.ones(3))
    coup = ot_semidiscrete(two, U1, rng=rng, n_iterations=20000)
    ref = w1_quantile_quadrature(two, U1)
    assert abs(coup.cost_estimate(rng, 400000) - ref) < 1e-3
    # assignment cells are the two quantile halves
    cond0 = coup.sample_given_source(rng, np.zeros(2000, dtype=int))
    cond1 = coup.sample_given_source(rng, np.ones(2000, dtype=int))
    assert cond0.max() <= 0.5 + 0.02
    assert cond1.min() >= 0.5 - 0.02


def test_semidiscrete_dual_nondecreasing():
    rng = np.random.default_rng(28)
    sq = build_box_partition([(0, 1), (0, 1)], (2, 2))
    tgt = random_cpwa(sq, rng)
    src = DiscreteMeasure(rng.uniform(0.2, 0.8, (3, 2)),
                          rng.dirichlet(np.ones(3)))
    final = ot_semidiscrete(src, tgt, rng=rng, n_iterations=8000,
                            tol_mass=5e-2)
    start = SemidiscreteCoupling(src, tgt, np.zeros(3), None)
    n = 200000
    d_final = final.dual_value(np.random.default_rng(1), n)
    d_start = start.dual_value(np.random.default_rng(1), n)
    assert d_final >= d_start - 3e-3


def test_semidiscrete_mass_mismatch_reported():
    rng = np.random.default_rng(29)
    sq = build_box_partition([(0, 1), (0, 1)], (1, 1))
    usq = CpwaDensityMeasure(sq, np.ones(4))
    src = DiscreteMeasure([[0.1, 0.1], [0.9, 0.9]], [0.5, 0.5])
    with pytest.raises(CellMassMismatchError) as exc:
        ot_semidiscrete(src, usq, rng=rng, n_iterations=1, tol_mass=1e-4)
    assert exc.value.achieved > 1e-4


def test_semidiscrete_degenerate_cell_rejection():
    rng = np.random.default_rng(30)
    sq = build_box_partition([(0, 1), (0, 1)], (1, 1))
    usq = CpwaDensityMeasure(sq, np.ones(4))
    src = DiscreteMeasure([[0.5, 0.5], [0.6, 0.5]], [0.5, 0.5])
    coup = SemidiscreteCoupling(src, usq, np.array([0.0, -1e9]), None)
    with pytest.raises(TransportError):
        coup.sample_given_source(rng, np.ones(10, dtype=int), max_trials=200)
