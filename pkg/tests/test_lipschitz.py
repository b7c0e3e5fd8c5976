import numpy as np
import pytest
from hypothesis import given, strategies as st

from sandwich.concepts import PTF, BoolCombo, Halfspace, Intersection, SingleHalfspace
from sandwich.lipschitz import build_lipschitz_sandwich, eval_down, eval_up, sandwich_rho
from sandwich.polycore import Polynomial

E1 = np.array([1.0, 0.0])


def test_rho_and_L_example():
    ls = build_lipschitz_sandwich(SingleHalfspace(Halfspace(E1, 0.0)), 1.0, 0.5, 1.0)
    assert ls.rho == pytest.approx(0.25) and ls.L == pytest.approx(8.0)
    # L = 2 sigma (2/eps)^s
    for sigma, eps, s in [(1.0, 0.3, 2.0), (2.5, 0.1, 1.5)]:
        assert 2 / sandwich_rho(eps, s, sigma) == pytest.approx(2 * sigma * (2 / eps) ** s)


def test_saturation_and_boundary():
    h = SingleHalfspace(Halfspace(E1, 0.0))
    ls = build_lipschitz_sandwich(h, 1.0, 0.5, 1.0)
    deep_in = np.array([[-1.0, 0.3]])
    deep_out = np.array([[1.0, -2.0]])
    assert eval_up(ls, deep_in)[0] == 1 and eval_down(ls, deep_in)[0] == 1
    assert eval_up(ls, deep_out)[0] == -1 and eval_down(ls, deep_out)[0] == -1
    assert eval_up(ls, np.array([[0.0, 5.0]]))[0] == 1
    # halfway into the dilation band the upper function passes through 0
    assert eval_up(ls, np.array([[0.125, 0.0]]))[0] == pytest.approx(0.0, abs=1e-12)


def test_invalid_parameters():
    h = SingleHalfspace(Halfspace(E1, 0.0))
    for sigma, eps, s in [(0.8, 0.2, 1), (1, 0.0, 1), (1, 1.0, 1), (1, 0.2, 0.5), (np.inf, 0.2, 1)]:
        with pytest.raises(ValueError):
            build_lipschitz_sandwich(h, sigma, eps, s)


@pytest.mark.parametrize("variant", ["two_distance", "one_distance"])
def test_ordering_and_lipschitz_on_intersections(rng, variant):
    for k in (1, 2, 3):
        c = Intersection([Halfspace(rng.normal(size=2), rng.normal(scale=0.5)) for _ in range(k)])
        ls = build_lipschitz_sandwich(c, 1.0, 0.4, 1.0, variant)
        X = rng.normal(size=(10_000, 2))
        Y = X + rng.normal(scale=0.05, size=X.shape)
        f = c.evaluate(X)
        up, down = eval_up(ls, X), eval_down(ls, X)
        assert np.all(down <= f) and np.all(f <= up)
        assert np.all(c.erode(X, ls.rho) <= down) and np.all(up <= c.dilate(X, ls.rho))
        dist = np.linalg.norm(X - Y, axis=1)
        assert np.all(np.abs(up - eval_up(ls, Y)) <= ls.L * dist + 1e-9)
        assert np.all(np.abs(down - eval_down(ls, Y)) <= ls.L * dist + 1e-9)


def test_other_families_sandwich(rng):
    X = rng.normal(size=(800, 2))
    concepts = [
        BoolCombo([Halfspace(E1, 0.0), Halfspace(np.array([0.0, 1.0]), 0.3)], [-1, 1, 1, -1]),
        PTF(Polynomial(2, {(2, 0): 1.0, (0, 2): 1.0, (0, 0): -1.0})),
    ]
    for c in concepts:
        ls = build_lipschitz_sandwich(c, 1.0, 0.4, 1.0)
        f = c.evaluate(X)
        assert np.all(eval_down(ls, X) <= f) and np.all(f <= eval_up(ls, X))


@given(st.floats(-2, 2), st.floats(0.05, 0.95), st.floats(1, 3), st.floats(1, 4),
       st.lists(st.floats(-4, 4), min_size=1, max_size=20))
def test_halfspace_sandwich_property(tau, eps, s, sigma, xs):
    c = SingleHalfspace(Halfspace(np.array([1.0]), tau))
    ls = build_lipschitz_sandwich(c, sigma, eps, s)
    X = np.array(xs)[:, None]
    up, down, f = ls.up(X), ls.down(X), c.evaluate(X)
    assert np.all((-1 <= down) & (down <= f) & (f <= up) & (up <= 1))
    # closed form in 1-D: up ramps from +1 at tau to -1 at tau + rho
    expect = np.clip(1 - 2 * (X[:, 0] - tau) / ls.rho, -1, 1)
    assert np.allclose(up, np.where(X[:, 0] <= tau, 1.0, expect), atol=1e-9)
