import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zop import (ConfigurationError, InputError, Regularizer, apply_prox, huber_envelope_abs,
                 prox_box, prox_l1, prox_l1_plus_box, prox_l2ball)

KINDS = [Regularizer.zero(), Regularizer.l1(0.7), Regularizer.box(-1.0, 0.5),
         Regularizer.l2ball(1.3), Regularizer.l1_plus_box(0.4, -0.2, 2.0)]


def test_soft_threshold_examples():
    assert prox_l1(np.array([1.2]), 0.5)[0] == pytest.approx(0.7, abs=1e-15)
    assert prox_l1(np.array([-0.3]), 0.5)[0] == 0.0
    assert prox_l1(np.array([0.0]), 0.5)[0] == 0.0
    assert prox_l1(np.array([0.5]), 0.5)[0] == 0.0


def test_box_examples():
    np.testing.assert_array_equal(prox_box(np.array([2.0, -3.0]), -1, 1), [1.0, -1.0])
    np.testing.assert_array_equal(prox_box(np.array([0.2, -0.3]), -1, 1), [0.2, -0.3])
    np.testing.assert_array_equal(prox_box(np.array([1.0, 1.0]), -1, 1), [1.0, 1.0])
    with pytest.raises(InputError):
        prox_box(np.zeros(2), 1, -1)


def test_ball_examples():
    x = np.array([1.2, -1.6])
    np.testing.assert_allclose(prox_l2ball(x, 1.0), x / 2)
    np.testing.assert_array_equal(prox_l2ball(np.zeros(3), 1.0), np.zeros(3))
    np.testing.assert_array_equal(prox_l2ball(x, 2.0), x)


def test_l1_plus_box_examples():
    assert prox_l1_plus_box(np.array([2.0]), 0.5, -1, 1, 1.0)[0] == 1.0
    x = np.array([0.3, -2.0, 5.0])
    np.testing.assert_array_equal(prox_l1_plus_box(x, 0.0, -1, 1, 3.0), prox_box(x, -1, 1))
    assert prox_l1_plus_box(np.array([0.2]), 0.5, -1, 1, 1.0)[0] == 0.0
    with pytest.raises(InputError):
        prox_l1_plus_box(x, 0.1, 1, -1, 1.0)


def test_apply_prox_dispatch():
    x = np.array([0.9, -2.0])
    np.testing.assert_array_equal(apply_prox(Regularizer.zero(), x, 0.3), x)
    np.testing.assert_array_equal(apply_prox(Regularizer.l1(2.0), x, 0.3), prox_l1(x, 0.6))
    with pytest.raises(InputError):
        apply_prox(Regularizer.zero(), x, 0.0)
    bogus = Regularizer.zero()
    object.__setattr__(bogus, "kind", "nuclear")
    with pytest.raises(ConfigurationError):
        apply_prox(bogus, x, 1.0)


def test_indicator_prox_independent_of_scale():
    x = np.array([3.0, -0.2, -4.0])
    for reg in (Regularizer.box(-1, 1), Regularizer.l2ball(1.0)):
        np.testing.assert_array_equal(apply_prox(reg, x, 1e-3), apply_prox(reg, x, 1e3))


@pytest.mark.parametrize("reg", KINDS, ids=lambda r: r.kind)
def test_nonexpansive(reg):
    rng = np.random.default_rng(0)
    X, Y = rng.normal(size=(1000, 4)) * 2, rng.normal(size=(1000, 4)) * 2
    for x, y in zip(X, Y):
        px, py = apply_prox(reg, x, 0.8), apply_prox(reg, y, 0.8)
        assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-12


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(range(len(KINDS))),
       st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.floats(1e-3, 10))
def test_firm_nonexpansiveness(k, x, y, alpha):
    reg = KINDS[k]
    x, y = np.array(x), np.array(y)
    px, py = apply_prox(reg, x, alpha), apply_prox(reg, y, alpha)
    d = px - py
    assert d @ d <= (x - y) @ d + 1e-10


@pytest.mark.parametrize("reg", KINDS, ids=lambda r: r.kind)
def test_optimality_residual_on_grid(reg):
    # 1-D slices: the prox minimizes alpha r(w) + (w - x)^2 / 2 over a 1e-6 grid
    alpha = 0.6
    grid = np.arange(-3.0, 3.0 + 5e-7, 1e-6)
    rv = reg.values(grid[:, None])
    for x in (-2.5, -0.3, 0.1, 0.45, 1.7):
        obj = alpha * rv + 0.5 * (grid - x) ** 2
        brute = grid[np.argmin(obj)]
        assert abs(apply_prox(reg, np.array([x]), alpha)[0] - brute) <= 1e-5


def test_huber_examples():
    assert huber_envelope_abs(0.5, 1.0) == (0.125, 0.5)
    assert huber_envelope_abs(3.0, 1.0) == (2.5, 1.0)
    lam = 0.7
    v, g = huber_envelope_abs(-lam, lam)
    assert g == -1.0
    assert v == pytest.approx(huber_envelope_abs(-lam - 1e-12, lam)[0], abs=1e-11)
    with pytest.raises(InputError):
        huber_envelope_abs(1.0, 0.0)
