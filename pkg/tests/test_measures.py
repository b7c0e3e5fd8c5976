import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from sandwich.concepts import Halfspace, Intersection, PTF, SingleHalfspace
from sandwich.measures import (DistributionSpec, RunningMoments, anticoncentration_check,
                               boundary_smoothness_profile, composition_smoothness_check, estimate_sigma, gaussian,
                               gaussian_quadrature, gsa_estimate_intersection, ls_norm, mc_moments, nazarov_bound,
                               tail_mass)
from sandwich.polycore import Polynomial

N = 200_000


def within(est, target, k=3.0):
    return abs(est.value - target) <= k * est.std_error + 1e-12


def test_ls_norm_examples():
    g1 = gaussian(1)
    for s in (1, 2, 3.5):
        e = ls_norm(lambda X: np.full(len(X), -0.7), g1, s, n=1000)
        assert e.value == pytest.approx(0.7, rel=1e-15) and e.std_error <= 1e-15
    x = lambda X: X[:, 0]
    assert within(ls_norm(x, g1, 2, n=N, seed=1), 1.0)
    assert within(ls_norm(x, g1, 1, n=N, seed=2), math.sqrt(2 / math.pi))
    assert ls_norm(x, g1, 2, method="quadrature", order=4).value == pytest.approx(1.0, rel=1e-13)


def test_central_halfspace_smoothness():
    h = SingleHalfspace(Halfspace(np.array([1.0]), 0.0))
    (rho, e), = boundary_smoothness_profile(h, gaussian(1), [0.05], n=N, seed=3)
    assert within(e, (2 * stats.norm.cdf(0.05) - 1) / 0.05)
    far = SingleHalfspace(Halfspace(np.array([1.0]), 12.0))
    (_, z), = boundary_smoothness_profile(far, gaussian(1), [0.05], n=N, seed=4)
    assert z.value == 0.0


def test_nazarov_tangent_intersection():
    W = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=float)
    c = Intersection([Halfspace(w, 1.0) for w in W])
    for _, e in boundary_smoothness_profile(c, gaussian(2), [0.01, 0.05, 0.1], n=N, seed=5):
        assert e.value <= nazarov_bound(4) + 3 * e.std_error
    assert nazarov_bound(4) == pytest.approx(math.sqrt(2 * math.log(4)) + 2)


def test_gsa_estimates():
    central = Intersection([Halfspace(np.array([1.0]), 0.0)])
    shifted = Intersection([Halfspace(np.array([1.0]), 2.0)])
    (_, a), = gsa_estimate_intersection(central, [0.01], n=N, seed=6)
    (_, b), = gsa_estimate_intersection(shifted, [0.01], n=N, seed=7)
    # the band average sits within O(rho^2) of the density
    assert abs(a.value - stats.norm.pdf(0)) <= 3 * a.std_error + 1e-4
    assert abs(b.value - stats.norm.pdf(2)) <= 3 * b.std_error + 1e-4


def test_composition_examples(rng):
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    h = Halfspace(e1, 0.3)
    same = composition_smoothness_check([h, h], [-1, -1, -1, 1], gaussian(2), 0.05, n=N, seed=8)
    assert same.pointwise_exceptions == 0 and same.holds
    assert abs(same.composed.value - same.parts[0].value) <= 1e-12
    assert same.composed.value < same.rhs
    xor = composition_smoothness_check([Halfspace(e1, 0.0), Halfspace(e2, 0.0)], [-1, 1, 1, -1], gaussian(2),
                                       0.05, n=N, seed=9)
    assert xor.holds
    ident = composition_smoothness_check([h], [-1, 1], gaussian(2), 0.05, n=N, seed=10)
    assert ident.composed.value == pytest.approx(ident.rhs, abs=1e-12)


def test_anticoncentration_examples():
    rep = anticoncentration_check(gaussian(2), n_directions=3, radii=(0.02,), thresholds=(0.0, 3.0), n=N, seed=11)
    bound = 2 * stats.norm.pdf(0)
    for _, t, r, e in rep.rows:
        exact = (stats.norm.cdf(t + r) - stats.norm.cdf(t - r)) / r
        assert within(e, exact, 4)
        if t == 3.0:
            assert e.value <= bound
    wide = anticoncentration_check(gaussian(1), n_directions=1, radii=(50.0,), thresholds=(0.0,), n=1000, seed=1)
    assert wide.max_ratio <= 1 / 50


def test_tail_mass_examples():
    assert tail_mass(gaussian(2), 0).value == 1
    e = tail_mass(gaussian(1), 1.96, n=N, seed=12)
    assert within(e, 2 * stats.norm.sf(1.96))
    r = math.sqrt(stats.chi2.ppf(0.99, 3))
    e = tail_mass(gaussian(3), r, n=N, seed=13)
    assert within(e, 0.01) and e.exact == pytest.approx(0.01)


def test_thread_count_does_not_change_results():
    f = lambda X: np.sin(X).sum(axis=1)
    a = mc_moments(f, gaussian(3), 300_000, 5, threads=1)
    b = mc_moments(f, gaussian(3), 300_000, 5, threads=4)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_generalized_gaussian_moments_and_tails():
    d = DistributionSpec(2, "gengauss", 0.5)
    X = d.sample(200_000, np.random.default_rng(0))
    for q in (1, 2, 3):
        m = np.mean(np.abs(X[:, 0]) ** q)
        assert m == pytest.approx(d.coordinate_abs_moment(q), rel=0.03)
    # the declared coordinate tail constant really bounds the tail
    t = np.linspace(0.1, 6, 50)
    assert np.all(2 * stats.gennorm.sf(t, d.power) <= d.alpha * np.exp(-d.beta * t ** d.power) + 1e-15)
    assert math.exp(d.radial_log_sf(3.0)) >= np.mean(np.linalg.norm(X, axis=1) > 3.0)
    g = gaussian(3)
    assert math.exp(g.radial_log_moment(2)) == pytest.approx(3.0)
    assert math.exp(g.radial_log_sf(2.0)) == pytest.approx(stats.chi2.sf(4.0, 3))


def test_estimate_sigma_floor_and_quadrature_weights():
    h = SingleHalfspace(Halfspace(np.array([1.0, 0.0]), 0.0))
    assert estimate_sigma(h, gaussian(2), n=20_000, seed=1) == 1.0
    X, w = gaussian_quadrature(2, 5)
    assert w.sum() == pytest.approx(1.0) and X.shape == (25, 2)


def test_distribution_validation():
    with pytest.raises(ValueError):
        DistributionSpec(1, "gaussian", 0.5)
    with pytest.raises(ValueError):
        DistributionSpec(1, "gengauss", 1.5)
    with pytest.raises(ValueError):
        DistributionSpec(2, "cauchy")


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50))
def test_running_moments_match_numpy(vals):
    r = RunningMoments()
    r.add(np.array(vals[: len(vals) // 2]))
    r.add(np.array(vals[len(vals) // 2:]))
    e = r.estimate()
    assert e.value == pytest.approx(np.mean(vals), abs=1e-9)
    assert e.std_error == pytest.approx(np.std(vals, ddof=1) / math.sqrt(len(vals)), rel=1e-6, abs=1e-6)


@given(st.floats(0.05, 2.0), st.integers(1, 3))
def test_ls_norm_of_constant_is_exact(c, s):
    e = ls_norm(lambda X: np.full(len(X), c), gaussian(2), s, n=500, seed=0)
    assert e.value == pytest.approx(c, rel=1e-12)
