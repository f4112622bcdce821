import numpy as np
import pytest

from teamsolve.geometry import FiniteSpace, build_box_partition
from teamsolve.measures import (CpwaDensityMeasure, DiscreteMeasure,
                                random_cpwa, uniform_points)
from teamsolve.problems import (CostModelError, barycenter_cost,
                                business_location_cost, capped_affine_cost,
                                tabulated_cpwa_cost)

STATIONS = np.array([[0.0, 2.0], [0.0, 0.75], [0.0, -0.75],
                     [0.0, -1.5], [-1.5, -1.5]])


def test_business_defaults_echo():
    m = business_location_cost(STATIONS)
    assert m.c_walk == 0.15
    assert m.c_train == 0.015
    assert m.c_restock == 0.4
    assert m.N == 5


def test_business_trivials():
    m = business_location_cost(STATIONS)
    z = np.array([[0.3, -0.7]])
    assert m.eval(0, z, z)[0] == 0.0
    assert m.eval(4, z, z)[0] == 0.0
    assert m.eval(0, [[0.0, 0.0]], [[0.0, 0.0]])[0] == 0.0


def test_business_dominated_by_walk():
    m = business_location_cost(STATIONS)
    rng = np.random.default_rng(0)
    X = rng.uniform(-2, 2, size=(5000, 2))
    Z = rng.uniform(-2, 2, size=(5000, 2))
    for i in (0, 3):
        assert np.all(m.eval(i, X, Z)
                      <= m.c_walk * np.abs(X - Z).sum(1) + 1e-12)
    assert np.allclose(m.eval(4, X, Z), m.c_restock * np.abs(X - Z).sum(1))


def test_capped_affine_regimes():
    m = capped_affine_cost([[1.0, 0.0]], [0.2], [0.8])
    z0 = np.array([[0.0, 0.0]])
    # dead zone
    assert m.eval(0, [[0.1]], z0)[0] == 0.0
    # saturation
    assert abs(m.eval(0, [[0.95]], z0)[0] - 0.6) < 1e-12
    # x=1, s=(1,0), z=0, kappa=(0.2, 0.8), N=1: ramp saturates at 0.6
    assert abs(m.eval(0, [[1.0]], z0)[0] - 0.6) < 1e-12
    with pytest.raises(CostModelError):
        capped_affine_cost([[1.0, 0.0]], [0.9], [0.8])
    with pytest.raises(CostModelError):
        capped_affine_cost([[2.0, 0.0]], [0.1], [0.8])


def test_barycenter_shift_and_lipschitz():
    sq = build_box_partition([(0, 1), (0, 1)], (1, 1))
    u = CpwaDensityMeasure(sq, np.ones(4))
    m = barycenter_cost([1.0], [sq], sq, [u])
    assert abs(m.shift - 2.0 / 3.0) < 1e-12
    d1 = DiscreteMeasure([[0.0, 0.0]], [1.0])
    d2 = DiscreteMeasure([[2.0, 0.0]], [1.0])
    z = build_box_partition([(0, 2), (-1, 1)], (2, 2))
    m2 = barycenter_cost([0.5, 0.5], [FiniteSpace([[0.0, 0.0]]),
                                      FiniteSpace([[2.0, 0.0]])], z, [d1, d2])
    assert abs(m2.shift - 2.0) < 1e-12


def test_lipschitz_random_pairs_all_families():
    rng = np.random.default_rng(1)
    xsq = build_box_partition([(-2, 2), (-2, 2)], (2, 2))
    zsq = build_box_partition([(-2, 2), (-2, 2)], (2, 2))

    def xs2(i, n):
        return uniform_points(xsq, rng, n)

    def zs2(n):
        return uniform_points(zsq, rng, n)

    bl = business_location_cost(STATIONS)
    ok, worst = bl.check_lipschitz(rng, xs2, zs2, n=10000)
    assert ok, worst

    bc = barycenter_cost([0.3, 0.7], [xsq, xsq], zsq)
    ok, worst = bc.check_lipschitz(rng, xs2, zs2, n=10000)
    assert ok, worst

    ca = capped_affine_cost([[0.6, 0.8], [1.0, 0.0]], [0.1, 0.2], [0.5, 0.9])
    zt = build_box_partition([(0, 1), (0, 1)], (2, 2))
    ok, worst = ca.check_lipschitz(
        rng, lambda i, n: rng.uniform(0, 1, (n, 1)),
        lambda n: uniform_points(zt, rng, n), n=10000)
    assert ok, worst

    tab = tabulated_cpwa_cost(
        [xsq], zsq, [rng.uniform(0, 1, (xsq.n_vertices, zsq.n_vertices))])
    ok, worst = tab.check_lipschitz(rng, xs2, zs2, n=10000)
    assert ok, worst


def test_tabulated_interpolates_table():
    xs = FiniteSpace([[0.0], [1.0]])
    zs = build_box_partition([(0, 1)], (2,))
    T = np.abs(xs.vertices[:, 0:1] - zs.vertices[:, 0][None, :])
    m = tabulated_cpwa_cost([xs], zs, [T])
    assert abs(m.eval(0, [[0.0]], [[0.25]])[0] - 0.25) < 1e-12
    assert abs(m.eval(0, [[1.0]], [[0.25]])[0] - 0.75) < 1e-12
    with pytest.raises(CostModelError):
        tabulated_cpwa_cost([xs], zs, [np.zeros((3, 3))])


def test_station_validation():
    with pytest.raises(CostModelError):
        business_location_cost([[0.0, 0.0], [0.0, 0.0]])
