import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import chebyshev as npcheb

from sandwich.polycore import (Polynomial, PolySum, RadialPower, basis_matrix, cheb_to_monomial_matrix,
                               chebyshev_basis_indices)


def mono(dim, terms):
    return Polynomial.from_terms(dim, terms)


def test_evaluate_basic_examples():
    assert Polynomial.constant(2, 1.0).evaluate(np.array([3.7, -2.0])) == 1.0
    assert mono(2, [((1, 1), 1.0)]).evaluate(np.array([2.0, 3.0])) == 6.0


def test_radial_dominator_at_half_radius_equals_eps():
    p2 = RadialPower(2, 0.1, 4.0, 3)
    x = np.array([2.0, 0.0])
    assert p2.evaluate(x) == pytest.approx(0.1, rel=1e-15)
    assert p2.to_polynomial().evaluate(x) == pytest.approx(0.1, rel=1e-12)


def test_coef_norm_examples():
    assert mono(2, [((1, 0), 2.0), ((0, 2), -3.0)]).coef_norm() == 5.0
    assert Polynomial(1, {}).coef_norm() == 0.0
    t2 = Polynomial(1, {(2,): 1.0}, basis="chebyshev")
    assert t2.coef_norm() == pytest.approx(3.0)


def test_to_monomial_examples():
    R = 3.5
    t1 = Polynomial(1, {(1,): 1.0}, basis="chebyshev", box=R).to_monomial()
    assert t1.coeffs == {(1,): pytest.approx(1 / R)}
    t2 = Polynomial(1, {(2,): 1.0}, basis="chebyshev").to_monomial()
    assert t2.coeffs == {(0,): pytest.approx(-1.0), (2,): pytest.approx(2.0)}
    p = mono(2, [((1, 2), 0.5)])
    assert p.to_monomial() is p


def test_cheb_to_monomial_matrix_matches_numpy():
    for n in range(12):
        A = cheb_to_monomial_matrix(n)
        for k in range(n + 1):
            e = np.zeros(k + 1)
            e[k] = 1
            ref = npcheb.cheb2poly(e)
            assert np.allclose(A[k, :k + 1], ref)
            assert np.all(A[k, k + 1:] == 0)


def test_add_scale_examples(rng):
    x1 = mono(2, [((1, 0), 1.0)])
    assert x1.add(x1.scale(-1.0)).n_terms == 0
    s = mono(2, [((1, 0), 1.0), ((0, 1), 1.0)]).scale(2)
    assert s.coeffs == {(1, 0): 2.0, (0, 1): 2.0}
    p1 = mono(2, [((2, 1), 0.3), ((0, 0), -1.0)])
    p2 = Polynomial(2, {(1, 3): 0.7, (0, 1): 2.0}, basis="chebyshev", box=2.0)
    X = rng.normal(size=(100, 2))
    assert np.allclose(p1.add(p2).evaluate(X), p1.evaluate(X) + p2.evaluate(X), atol=1e-12)


def test_compose_linear_examples(rng):
    W = np.linalg.qr(rng.normal(size=(5, 5)))[0][:2]
    one = Polynomial.constant(2, 1.0).compose_linear(W)
    assert one.dim == 5 and one.evaluate(rng.normal(size=5)) == pytest.approx(1.0)
    e1 = np.zeros((1, 4))
    e1[0, 0] = 1
    assert Polynomial(1, {(1,): 1.0}).compose_linear(e1).coeffs == {(1, 0, 0, 0): 1.0}
    P = Polynomial(2, {idx: rng.normal() for idx in map(tuple, chebyshev_basis_indices(2, 3))})
    X = rng.normal(size=(100, 5))
    assert np.allclose(P.compose_linear(W).evaluate(X), P.evaluate(X @ W.T), atol=1e-10)


def test_high_degree_paths_agree(rng):
    # dense Chebyshev evaluation switches to a NUFFT above a size threshold
    c = rng.normal(size=200) / (1 + np.arange(200)) ** 2
    p = Polynomial(1, dense=c, basis="chebyshev", box=4.0)
    X = rng.uniform(-4, 4, size=(2000, 1))
    assert np.allclose(p.evaluate(X), npcheb.chebval(X[:, 0] / 4, c), atol=1e-12)
    c2 = rng.normal(size=(60, 60)) / np.add.outer(np.arange(60), np.arange(60)).clip(1) ** 2
    q = Polynomial(2, dense=c2, basis="chebyshev", box=3.0)
    Y = rng.uniform(-3, 3, size=(1000, 2))
    assert np.allclose(q.evaluate(Y), npcheb.chebval2d(Y[:, 0] / 3, Y[:, 1] / 3, c2), atol=1e-11)
    # points outside the box fall back to direct recurrences
    Z = np.array([[5.0], [-6.0]])
    assert np.allclose(p.evaluate(Z), npcheb.chebval(Z[:, 0] / 4, c), rtol=1e-12)


def test_log_coef_norm_bound_dominates(rng):
    for _ in range(5):
        c = rng.normal(size=(4, 5))
        p = Polynomial(2, dense=c, basis="chebyshev", box=float(rng.uniform(0.5, 3)))
        assert math.log(p.coef_norm()) <= p.log_coef_norm_bound() + 1e-9


def test_radial_power_polynomial_and_norm():
    r = RadialPower(3, 0.2, 5.0, 2)
    P = r.to_polynomial()
    X = np.array([[1.0, 2.0, -0.5], [0.1, 0.0, 3.0]])
    assert np.allclose(P.evaluate(X), r.evaluate(X), rtol=1e-12)
    assert math.exp(r.log_coef_norm()) == pytest.approx(P.coef_norm(), rel=1e-12)


def test_polysum_pullback_and_record(rng):
    core = Polynomial(1, {(0,): 0.1, (3,): 0.4}, basis="chebyshev", box=2.0)
    s = PolySum((core, RadialPower(1, 0.1, 2.0, 2)), const=0.3)
    W = np.linalg.qr(rng.normal(size=(4, 4)))[0][:1]
    lifted = s.pullback(W)
    X = rng.normal(size=(50, 4))
    assert np.allclose(lifted.evaluate(X), s.evaluate(X @ W.T), atol=1e-12)
    back = PolySum.from_record(lifted.to_record())
    assert np.array_equal(back.evaluate(X), lifted.evaluate(X))
    assert lifted.degree == 4
    assert np.allclose(lifted.to_monomial().evaluate(X), lifted.evaluate(X), atol=1e-10)


def test_polynomial_validation():
    with pytest.raises(ValueError):
        Polynomial(0, {})
    with pytest.raises(ValueError):
        Polynomial(1, {(1,): 1.0}, degree=0)
    with pytest.raises(ValueError):
        Polynomial(1, {(1,): math.nan})
    with pytest.raises(ValueError):
        Polynomial(2, {(1,): 1.0})


def test_basis_matrix_columns():
    pts = np.array([[0.5, -0.25], [1.0, 2.0]])
    idx = chebyshev_basis_indices(2, 2)
    assert idx.shape == (6, 2) and tuple(idx[0]) == (0, 0)
    M = basis_matrix(pts, idx, "monomial")
    for col, (a, b) in enumerate(idx):
        assert np.allclose(M[:, col], pts[:, 0] ** a * pts[:, 1] ** b)


coef = st.floats(-5, 5, allow_nan=False)
index2 = st.tuples(st.integers(0, 4), st.integers(0, 4))
polys = st.dictionaries(index2, coef, max_size=6)


@given(polys, polys, st.tuples(st.floats(-2, 2), st.floats(-2, 2)))
def test_add_is_pointwise(a, b, x):
    p, q = Polynomial(2, a), Polynomial(2, b)
    x = np.array(x)
    assert p.add(q).evaluate(x) == pytest.approx(p.evaluate(x) + q.evaluate(x), abs=1e-9)


@given(polys, st.floats(-3, 3), st.tuples(st.floats(-2, 2), st.floats(-2, 2)))
def test_scale_is_pointwise(a, c, x):
    p = Polynomial(2, a)
    x = np.array(x)
    assert p.scale(c).evaluate(x) == pytest.approx(c * p.evaluate(x), abs=1e-9)


@given(polys, st.floats(0.5, 4), st.tuples(st.floats(-2, 2), st.floats(-2, 2)))
def test_basis_change_preserves_values(a, box, x):
    p = Polynomial(2, a, basis="chebyshev", box=box)
    x = np.array(x)
    assert p.to_monomial().evaluate(x) == pytest.approx(p.evaluate(x), rel=1e-9, abs=1e-9)
    assert p.coef_norm() >= 0


@given(polys)
def test_coef_norm_triangle(a):
    p = Polynomial(2, a)
    q = p.scale(-0.5).add(Polynomial.constant(2, 1.0))
    assert p.add(q).coef_norm() <= p.coef_norm() + q.coef_norm() + 1e-12


@given(polys)
def test_record_roundtrip(a):
    p = Polynomial(2, a, basis="chebyshev", box=1.5)
    back = Polynomial.from_record(p.to_record())
    assert back.coeffs == p.coeffs and back.box == p.box and back.degree == p.degree
