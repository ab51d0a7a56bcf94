import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mudloss.errors import DataError
from mudloss.smoothing import savgol_coeffs, savitzky_golay


def quadratic_center_weights_oracle(window: int) -> np.ndarray:
    """Independent oracle: solve the 5-point quadratic LS normal equations."""
    half = window // 2
    t = np.arange(-half, half + 1, dtype=float)
    A = np.vander(t, 3, increasing=True)
    # weights w with smoothed = w @ y and fitted value = e0' (A'A)^-1 A' y
    return A @ np.linalg.inv(A.T @ A) @ np.array([1.0, 0.0, 0.0])


def test_interior_weights_window5_order2():
    expected = np.array([-3.0, 12.0, 17.0, 12.0, -3.0]) / 35.0
    got = savgol_coeffs(5, 2)
    np.testing.assert_allclose(got, expected, atol=1e-12)
    np.testing.assert_allclose(quadratic_center_weights_oracle(5), expected, atol=1e-12)


def test_constant_series_unchanged():
    out = savitzky_golay([4.0] * 5, window=5, order=2)
    np.testing.assert_allclose(out, [4.0] * 5, atol=1e-12)


def test_quadratic_series_reproduced_exactly():
    t = np.arange(10, dtype=float)
    series = t**2
    out = savitzky_golay(series, window=5, order=2)
    np.testing.assert_allclose(out, series, atol=1e-10)


@pytest.mark.parametrize("window,order", [(5, 2), (7, 3), (11, 3), (5, 4), (9, 0)])
def test_polynomial_reproduction_including_boundaries(window, order):
    rng = np.random.default_rng(window * 10 + order)
    coef = rng.standard_normal(order + 1)
    t = np.linspace(-1.0, 2.0, 40)
    series = np.polynomial.polynomial.polyval(t, coef) if order > 0 else np.full(40, coef[0])
    out = savitzky_golay(series, window=window, order=order)
    np.testing.assert_allclose(out, series, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(
    st.integers(min_value=0, max_value=12345),
    st.floats(min_value=-3, max_value=3),
    st.floats(min_value=-3, max_value=3),
)
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    s1 = rng.standard_normal(20)
    s2 = rng.standard_normal(20)
    lhs = savitzky_golay(a * s1 + b * s2, 7, 2)
    rhs = a * savitzky_golay(s1, 7, 2) + b * savitzky_golay(s2, 7, 2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_smoothing_reduces_noise_variance():
    rng = np.random.default_rng(0)
    noise = rng.standard_normal(500)
    out = savitzky_golay(noise, 11, 3)
    assert out.var() < noise.var()


@pytest.mark.parametrize(
    "window,order,n",
    [(4, 2, 10), (2, 0, 10), (5, 5, 10), (5, 7, 10), (7, 2, 5)],
)
def test_invalid_arguments_rejected(window, order, n):
    with pytest.raises(DataError):
        savitzky_golay(np.zeros(n), window, order)
