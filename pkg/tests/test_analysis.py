import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lyapunov_lab.analysis import observed_orders, polynomial_limit, richardson_limit

NS = np.array([25, 50, 100, 200])


def test_orders_of_a_power_law():
    np.testing.assert_allclose(observed_orders(NS, 3.0 * NS**-2.0), 2.0)


def test_orders_validation():
    with pytest.raises(ValueError):
        observed_orders([10], [1.0])
    with pytest.raises(ValueError):
        observed_orders([10, 20], [1.0])


def test_richardson_recovers_a_single_power():
    lim, p = richardson_limit(NS, 0.7 + 2.0 * NS**-1.5)
    assert lim == pytest.approx(0.7, abs=1e-12)
    assert p == pytest.approx(1.5)


def test_richardson_constant_sequence():
    assert richardson_limit(NS, np.full(4, 2.5)) == (2.5, np.inf)


def test_richardson_validation():
    with pytest.raises(ValueError):
        richardson_limit([10, 20], [1.0, 2.0])
    with pytest.raises(ValueError):
        richardson_limit([10, 20, 50], [1.0, 2.0, 3.0])


def test_richardson_is_biased_by_a_second_term():
    v = 1.0 * NS**-2.0 - 40.0 * NS**-4.0
    lim, p = richardson_limit(NS, v)
    assert p < 2 and lim < 0
    assert polynomial_limit(NS[-3:], v[-3:]) == pytest.approx(0.0, abs=1e-15)


def test_polynomial_limit_least_squares():
    v = -0.2 + 5.0 * NS**-2.0 + 30.0 * NS**-4.0
    assert polynomial_limit(NS, v) == pytest.approx(-0.2, abs=1e-12)
    assert polynomial_limit(NS, v - 5.0 * NS**-2.0, powers=(4,)) == pytest.approx(-0.2, abs=1e-12)


def test_polynomial_limit_validation():
    with pytest.raises(ValueError):
        polynomial_limit([10, 20], [1.0, 2.0])
    with pytest.raises(ValueError):
        polynomial_limit([10, 10, 20], [1.0, 1.0, 2.0])


@given(lim=st.floats(-1, 1), c2=st.floats(-10, 10), c4=st.floats(-100, 100))
def test_polynomial_limit_is_exact_on_its_model(lim, c2, c4):
    n = np.array([100.0, 200.0, 400.0])
    v = lim + c2 * n**-2 + c4 * n**-4
    assert polynomial_limit(n, v) == pytest.approx(lim, abs=1e-12)
