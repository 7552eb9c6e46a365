import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rldx.stats import (
    InsufficientDataError,
    Series,
    kl_divergence,
    linear_fit,
    max_abs_second_derivative,
    mc_dropout_dispersion,
    normalized_entropy,
    rmse,
    strictly_monotone_decreasing,
    windowed_std,
)


# Independent oracles, written before the implementations they check.

def fit_oracle(x, y):
    """Closed-form normal equations for a straight-line fit."""
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    n = len(x)
    sx, sy = sum(x), sum(y)
    sxx = sum(v * v for v in x)
    sxy = sum(a * b for a, b in zip(x, y))
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    intercept = (sy - slope * sx) / n
    ssr = sum((yi - (slope * xi + intercept)) ** 2 for xi, yi in zip(x, y))
    return slope, intercept, math.sqrt(ssr / n)


def entropy_oracle(p):
    h = -sum(pi * math.log(pi) for pi in p if pi > 0)
    return h / math.log(len(p))


def kl_oracle(p, q):
    total = 0.0
    for pi, qi in zip(p, q):
        if pi == 0:
            continue
        if qi == 0:
            return math.inf
        total += pi * math.log(pi / qi)
    return total


# -- linear_fit --------------------------------------------------------------


def test_fit_exact_affine():
    fit = linear_fit(Series([0, 1, 2], [0.0, 2.0, 4.0]))
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.intercept == pytest.approx(0.0, abs=1e-12)
    assert fit.rmse_residual == pytest.approx(0.0, abs=1e-12)


def test_fit_constant_is_exact():
    fit = linear_fit(Series([0, 1, 2, 3], [5.0, 5.0, 5.0, 5.0]))
    assert fit.slope == 0.0
    assert fit.intercept == 5.0
    assert fit.rmse_residual == 0.0


def test_fit_matches_normal_equations_on_alternation():
    fit = linear_fit(Series([0, 1, 2, 3], [0.0, 1.0, 0.0, 1.0]))
    slope, intercept, resid = fit_oracle([0, 1, 2, 3], [0, 1, 0, 1])
    assert (slope, intercept) == pytest.approx((0.2, 0.2), abs=1e-12)
    assert fit.slope == pytest.approx(slope, abs=1e-12)
    assert fit.intercept == pytest.approx(intercept, abs=1e-12)
    assert fit.rmse_residual == pytest.approx(resid, abs=1e-12)


def test_fit_needs_two_points():
    with pytest.raises(InsufficientDataError):
        linear_fit(Series([3], [1.0]))


def test_fit_matches_oracle_on_random_series():
    rng = np.random.default_rng(11)
    for _ in range(300):
        n = int(rng.integers(2, 200))
        idx = np.sort(rng.choice(10 * n, size=n, replace=False))
        vals = rng.normal(size=n)
        fit = linear_fit(Series(idx, vals))
        slope, intercept, resid = fit_oracle(idx, vals)
        assert fit.slope == pytest.approx(slope, abs=1e-9)
        assert fit.intercept == pytest.approx(intercept, abs=1e-9)
        assert fit.rmse_residual == pytest.approx(resid, abs=1e-9)


# -- rmse ---------------------------------------------------------------------


def test_rmse_identity_and_symmetry():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([0.0, 0.0], [1.0, 1.0]) == pytest.approx(1.0, abs=1e-15)
    assert rmse([0.0, 3.0], [0.0, 0.0]) == pytest.approx(math.sqrt(4.5), abs=1e-12)


def test_rmse_shape_mismatch():
    with pytest.raises(ValueError):
        rmse([1.0], [1.0, 2.0])


@given(
    st.lists(st.floats(-100, 100), min_size=1, max_size=30),
    st.data(),
)
@settings(max_examples=100, deadline=None)
def test_rmse_symmetric_and_triangle(a, data):
    n = len(a)
    b = data.draw(st.lists(st.floats(-100, 100), min_size=n, max_size=n))
    c = data.draw(st.lists(st.floats(-100, 100), min_size=n, max_size=n))
    assert rmse(a, b) == rmse(b, a)
    assert rmse(a, c) <= rmse(a, b) + rmse(b, c) + 1e-9


# -- second derivative --------------------------------------------------------


def test_second_derivative_linear_is_zero():
    assert max_abs_second_derivative(Series(range(5), [3.0 + 2 * i for i in range(5)])) == 0.0


def test_second_derivative_quadratic():
    s = Series(range(5), [float(i * i) for i in range(5)])
    assert max_abs_second_derivative(s) == pytest.approx(2.0, abs=1e-12)


def test_second_derivative_normalized_step():
    s = Series(range(6), [1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    assert max_abs_second_derivative(s, normalize=True) == pytest.approx(1.0, abs=1e-12)


def test_second_derivative_translation_and_scale():
    rng = np.random.default_rng(5)
    vals = rng.normal(size=20)
    s = Series(range(20), vals)
    shifted = Series(range(20), vals + 7.5)
    scaled = Series(range(20), vals * 3.0)
    base = max_abs_second_derivative(s)
    assert max_abs_second_derivative(shifted) == pytest.approx(base, abs=1e-9)
    assert max_abs_second_derivative(scaled) == pytest.approx(3 * base, rel=1e-12)


def test_second_derivative_needs_three_points():
    with pytest.raises(InsufficientDataError):
        max_abs_second_derivative(Series([0, 1], [0.0, 1.0]))


# -- entropy and KL -----------------------------------------------------------


def test_entropy_uniform_and_onehot():
    assert normalized_entropy([0.25] * 4) == pytest.approx(1.0, abs=1e-12)
    assert normalized_entropy([1.0, 0.0, 0.0]) == 0.0


def test_entropy_reference_value():
    assert normalized_entropy([0.9, 0.1]) == pytest.approx(
        entropy_oracle([0.9, 0.1]), abs=1e-12
    )
    assert normalized_entropy([0.9, 0.1]) == pytest.approx(0.4690, abs=5e-5)


def test_entropy_rejects_bad_simplex():
    with pytest.raises(ValueError):
        normalized_entropy([0.5, 0.6])
    with pytest.raises(ValueError):
        normalized_entropy([1.2, -0.2])


def test_kl_reference_values():
    assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert kl_divergence([0.5, 0.5], [0.9, 0.1]) == pytest.approx(
        kl_oracle([0.5, 0.5], [0.9, 0.1]), abs=1e-12
    )
    assert kl_divergence([0.5, 0.5], [0.9, 0.1]) == pytest.approx(0.5108, abs=5e-5)
    assert kl_divergence([1.0, 0.0], [0.0, 1.0]) == math.inf


def simplex_vectors(rng, k):
    v = rng.dirichlet(np.ones(k))
    return v / v.sum()


def test_kl_gibbs_inequality():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        k = int(rng.integers(2, 8))
        p = simplex_vectors(rng, k)
        q = simplex_vectors(rng, k)
        assert kl_divergence(p, q) >= 0.0
    p = simplex_vectors(rng, 5)
    assert kl_divergence(p, p) == 0.0


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_entropy_permutation_invariant(k, seed):
    rng = np.random.default_rng(seed)
    p = simplex_vectors(rng, k)
    h = normalized_entropy(p)
    assert 0.0 <= h <= 1.0
    assert normalized_entropy(p[::-1].copy()) == pytest.approx(h, abs=1e-12)


# -- dropout dispersion -------------------------------------------------------


def test_dispersion_identical_samples():
    samples = np.ones((3, 2, 4))
    assert mc_dropout_dispersion(samples) == 0.0


def test_dispersion_population_convention():
    assert mc_dropout_dispersion([[[0.0]], [[1.0]]]) == 0.5


def test_dispersion_matches_per_cell_oracle():
    rng = np.random.default_rng(9)
    samples = rng.normal(size=(4, 2, 2))
    expected = np.mean(
        [[np.std(samples[:, b, k]) for k in range(2)] for b in range(2)]
    )
    assert mc_dropout_dispersion(samples) == pytest.approx(expected, abs=1e-12)


def test_dispersion_needs_two_samples():
    with pytest.raises(InsufficientDataError):
        mc_dropout_dispersion(np.ones((1, 2, 2)))


# -- monotonicity and windowed std --------------------------------------------


def test_monotone_geometric_decay():
    vals = [1.0 * 0.99**i for i in range(100)]
    assert strictly_monotone_decreasing(Series(range(100), vals), tol=1e-9)


def test_monotone_constant_is_false():
    assert not strictly_monotone_decreasing(Series(range(10), [2.0] * 10), tol=1e-9)


def test_monotone_single_jump_is_false():
    vals = [1.0 * 0.9**i for i in range(20)]
    vals[10] = vals[9] + 0.1
    assert not strictly_monotone_decreasing(Series(range(20), vals), tol=1e-3)


def test_windowed_std_constant():
    out = windowed_std([3.0] * 6, 3)
    assert np.all(out.values == 0.0)
    assert list(out.index) == [2, 3, 4, 5]


def test_windowed_std_alternation():
    out = windowed_std([0.0, 1.0, 0.0, 1.0], 2)
    assert list(out.index) == [1, 2, 3]
    assert out.values == pytest.approx([0.5, 0.5, 0.5], abs=1e-15)


def test_windowed_std_degenerate_window():
    vals = [1.0, 2.0, 4.0]
    out = windowed_std(vals, 3)
    assert len(out) == 1
    assert out.values[0] == pytest.approx(np.std(vals), abs=1e-12)


def test_windowed_std_window_too_long():
    with pytest.raises(InsufficientDataError):
        windowed_std([1.0, 2.0], 3)


def test_series_validation():
    with pytest.raises(ValueError):
        Series([2, 1], [0.0, 1.0])
    with pytest.raises(ValueError):
        Series([], [])
    with pytest.raises(ValueError):
        Series([-1, 0], [0.0, 1.0])
