import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mudloss.errors import ConfigError, DataError
from mudloss.gp import fit
from mudloss.lime import (
    LimeConfig,
    LocalExplanation,
    explain_instance,
    fit_local_surrogate,
    global_scores,
    lasso_zero_threshold,
    perturb_samples,
    proximity_weights,
    select_features,
)
from mudloss.synth import make_linear_dataset


def _wls_oracle(Z, y, w):
    """Closed-form weighted least squares with intercept (normal equations)."""
    A = np.hstack([np.ones((Z.shape[0], 1)), Z])
    M = A.T @ (w[:, None] * A)
    return np.linalg.solve(M, A.T @ (w * y))


def explanation(coeffs, r2=1.0, index=0):
    return LocalExplanation(index, 0.0, np.asarray(coeffs, dtype=float), r2, 1.0, 50)


# --- perturb_samples ---------------------------------------------------------


def test_zero_scale_repeats_the_instance():
    cfg = LimeConfig(n_samples=20, scale=0.0, seed=1)
    Z = perturb_samples(np.array([1.0, -2.0]), cfg)
    assert np.all(Z == np.array([1.0, -2.0]))


def test_row_zero_is_the_instance_and_runs_are_deterministic():
    cfg = LimeConfig(n_samples=50, seed=9)
    x = np.array([0.3, 0.7, -1.0])
    Z1 = perturb_samples(x, cfg)
    Z2 = perturb_samples(x, cfg)
    np.testing.assert_array_equal(Z1, Z2)
    np.testing.assert_array_equal(Z1[0], x)


@pytest.mark.parametrize("distribution", ["gaussian", "uniform"])
def test_perturbation_std_matches_scale(distribution):
    cfg = LimeConfig(n_samples=10000, distribution=distribution, scale=1.0, seed=3)
    x = np.zeros(3)
    Z = perturb_samples(x, cfg)
    stds = (Z[1:] - x).std(axis=0, ddof=1)
    assert np.all(np.abs(stds - 1.0) < 0.03)


# --- proximity_weights --------------------------------------------------------


def test_zero_distance_weight_is_one():
    x = np.array([1.0, 1.0])
    w = proximity_weights(x, x[None, :], 0.5)
    assert w[0] == 1.0


def test_weight_at_distance_sigma():
    x = np.zeros(1)
    w = proximity_weights(x, np.array([[2.0]]), 2.0)
    assert abs(w[0] - math.exp(-1.0)) < 1e-12


def test_weights_decrease_with_distance():
    x = np.zeros(1)
    Z = np.linspace(0, 5, 20)[:, None]
    w = proximity_weights(x, Z, 1.3)
    assert np.all(np.diff(w) < 0)
    assert np.all((w > 0) & (w <= 1))


# --- fit_local_surrogate -------------------------------------------------------


def _sample_problem(seed=0, n=200, d=2):
    rng = np.random.default_rng(seed)
    Z = np.vstack([np.zeros(d), rng.standard_normal((n - 1, d))])
    w = proximity_weights(np.zeros(d), Z, 0.75 * math.sqrt(d))
    return Z, w, rng


def test_exact_linear_function_recovered_at_zero_penalty():
    Z, w, _ = _sample_problem()
    y = 3.0 * Z[:, 0] - 2.0 * Z[:, 1] + 1.0
    local = fit_local_surrogate(Z, y, w, 0.0)
    np.testing.assert_allclose(local.coefficients, [3.0, -2.0], atol=1e-6)
    assert abs(local.intercept - 1.0) < 1e-6
    assert abs(local.r2 - 1.0) < 1e-12


def test_zero_penalty_matches_wls_normal_equations_oracle():
    for seed in range(5):
        Z, w, rng = _sample_problem(seed, n=150, d=4)
        y = Z @ rng.standard_normal(4) + 0.3 * rng.standard_normal(150)
        local = fit_local_surrogate(Z, y, w, 0.0)
        oracle = _wls_oracle(Z, y, w)
        np.testing.assert_allclose(local.intercept, oracle[0], atol=1e-6)
        np.testing.assert_allclose(local.coefficients, oracle[1:], atol=1e-6)


def test_constant_target_returns_intercept_only():
    Z, w, _ = _sample_problem()
    local = fit_local_surrogate(Z, np.full(Z.shape[0], 7.5), w, 0.01)
    assert np.all(local.coefficients == 0.0)
    assert local.intercept == 7.5
    assert local.r2 == 1.0


def test_penalty_at_analytic_threshold_zeroes_everything():
    for seed in range(10):
        Z, w, rng = _sample_problem(seed, n=80, d=3)
        y = Z @ [2.0, -1.0, 0.5] + rng.standard_normal(80)
        lam_max = lasso_zero_threshold(Z, y, w)
        local = fit_local_surrogate(Z, y, w, lam_max)
        assert np.all(local.coefficients == 0.0)
        below = fit_local_surrogate(Z, y, w, 0.95 * lam_max)
        assert np.any(below.coefficients != 0.0)


def test_support_nesting_across_penalties():
    for seed in range(10):
        Z, w, rng = _sample_problem(seed, n=100, d=4)
        y = Z @ [1.5, -0.8, 0.3, 0.0] + 0.5 * rng.standard_normal(100)
        supports = []
        for lam in (0.01, 0.1, 1.0):
            local = fit_local_surrogate(Z, y, w, lam)
            supports.append(set(np.flatnonzero(np.abs(local.coefficients) > 1e-12)))
        assert supports[2] <= supports[1] <= supports[0]


def test_surrogate_shape_errors():
    Z, w, _ = _sample_problem(n=10, d=3)
    with pytest.raises(DataError):
        fit_local_surrogate(Z[:4], np.zeros(4), w[:4], 0.0)  # n < d + 2
    with pytest.raises(DataError):
        fit_local_surrogate(Z, np.zeros(10), np.zeros(10), 0.0)  # all-zero weights


def test_infinite_kernel_width_approaches_unweighted_fit():
    Z, _, rng = _sample_problem(3, n=120, d=3)
    y = Z @ [1.0, 2.0, -1.0] + 0.2 * rng.standard_normal(120)
    w = proximity_weights(np.zeros(3), Z, 1e6)
    local = fit_local_surrogate(Z, y, w, 0.0)
    oracle = _wls_oracle(Z, y, np.ones(120))
    np.testing.assert_allclose(local.coefficients, oracle[1:], atol=1e-6)


def test_output_scaling_scales_coefficients_linearly():
    Z, w, rng = _sample_problem(4, n=100, d=3)
    y = Z @ [1.0, -2.0, 0.5] + 0.1 * rng.standard_normal(100)
    base = fit_local_surrogate(Z, y, w, 0.0)
    scaled = fit_local_surrogate(Z, 3.0 * y, w, 0.0)
    np.testing.assert_allclose(scaled.coefficients, 3.0 * base.coefficients, atol=1e-6)


# --- explain_instance -----------------------------------------------------------


@pytest.fixture(scope="module")
def linear_gp_model():
    coefficients = np.array([3.0, -2.0, 1.0])
    ds = make_linear_dataset(150, coefficients, intercept=0.0, noise_std=1e-3, seed=6)
    model = fit(ds, restarts=2, seed=1)
    return model, coefficients


def test_linear_model_coefficients_recovered(linear_gp_model):
    model, coefficients = linear_gp_model
    cfg = LimeConfig(n_samples=600, l1_penalty=0.0, seed=11)
    local = explain_instance(model, np.zeros(3), cfg, index=0)
    rel = np.abs(local.coefficients - coefficients) / np.abs(coefficients)
    assert np.max(rel) < 0.05
    assert local.r2 > 0.9


def test_inert_feature_gets_negligible_weight():
    rng = np.random.default_rng(12)
    X = rng.standard_normal((150, 3))
    y = 2.0 * X[:, 0] + 1.0 * X[:, 1]  # feature 2 ignored
    from mudloss.data import Dataset
    from mudloss.synth import synthetic_schema

    model = fit(Dataset(X, y, synthetic_schema(3)), restarts=2, seed=2)
    cfg = LimeConfig(n_samples=600, l1_penalty=0.0, seed=13)
    local = explain_instance(model, np.zeros(3), cfg)
    assert abs(local.coefficients[2]) < 0.05 * np.max(np.abs(local.coefficients))


def test_explain_instance_deterministic(linear_gp_model):
    model, _ = linear_gp_model
    cfg = LimeConfig(n_samples=300, seed=21)
    a = explain_instance(model, np.array([0.5, -0.5, 0.2]), cfg, index=4)
    b = explain_instance(model, np.array([0.5, -0.5, 0.2]), cfg, index=4)
    np.testing.assert_array_equal(a.coefficients, b.coefficients)
    assert (a.index, a.intercept, a.r2, a.kernel_width) == (
        b.index,
        b.intercept,
        b.r2,
        b.kernel_width,
    )


def test_explain_instance_requires_enough_samples(linear_gp_model):
    model, _ = linear_gp_model
    with pytest.raises(DataError, match="d\\+2|too small"):
        explain_instance(model, np.zeros(3), LimeConfig(n_samples=4, seed=0))


# --- global_scores ---------------------------------------------------------------


def test_sign_cancellation():
    report = global_scores([explanation([1.0]), explanation([-1.0])])
    assert report.mean_abs[0] == 1.0
    assert report.actual_mean[0] == 0.0
    assert report.support_freq[0] == 1.0


def test_support_counting():
    report = global_scores([explanation([0.0]), explanation([2.0]),
                            explanation([0.0]), explanation([0.0])])
    assert report.support_freq[0] == 0.25
    assert report.mean_abs[0] == 0.5


def test_weighted_mean_ignores_zero_r2_models():
    report = global_scores([explanation([1.0], r2=1.0), explanation([3.0], r2=0.0)])
    assert report.weighted_mean[0] == 1.0
    # negative r2 clamps to zero weight as well
    report = global_scores([explanation([1.0], r2=0.5), explanation([9.0], r2=-2.0)])
    assert report.weighted_mean[0] == 1.0


def test_all_positive_coefficients_make_columns_equal():
    # every local weight positive: absolute and signed means coincide
    values = [1.2, 1.721026]
    report = global_scores([explanation([v]) for v in values])
    assert report.mean_abs[0] == report.actual_mean[0]
    assert abs(report.mean_abs[0] - 1.460513) < 1e-12


def test_weight_fallback_when_all_r2_nonpositive():
    report = global_scores([explanation([2.0], r2=-1.0), explanation([4.0], r2=0.0)])
    assert report.weight_fallback
    np.testing.assert_array_equal(report.weighted_mean, report.mean_abs)


def test_ranking_is_permutation_with_index_tie_break():
    report = global_scores([explanation([1.0, 3.0, 1.0, 3.0])])
    assert sorted(report.ranking) == [0, 1, 2, 3]
    assert report.ranking == (1, 3, 0, 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=8), st.integers(min_value=1, max_value=10),
       st.integers(min_value=0, max_value=9999))
def test_triangle_inequality_property(d, k, seed):
    rng = np.random.default_rng(seed)
    exps = [explanation(rng.standard_normal(d), r2=float(rng.uniform(-1, 1)), index=i)
            for i in range(k)]
    report = global_scores(exps)
    assert np.all(np.abs(report.actual_mean) <= report.mean_abs + 1e-15)


def test_aggregation_matches_direct_summation_oracle():
    rng = np.random.default_rng(77)
    K, d = 12, 5
    B = rng.standard_normal((K, d))
    r2s = rng.uniform(-0.5, 1.0, K)
    exps = [explanation(B[k], r2=float(r2s[k]), index=k) for k in range(K)]
    report = global_scores(exps)
    for j in range(d):
        mean_abs = sum(abs(B[k, j]) for k in range(K)) / K
        actual = sum(B[k, j] for k in range(K)) / K
        freq = sum(1 for k in range(K) if abs(B[k, j]) > 1e-12) / K
        wk = [max(r2s[k], 0.0) for k in range(K)]
        weighted = sum(w * abs(B[k, j]) for k, w in enumerate(wk)) / sum(wk)
        assert abs(report.mean_abs[j] - mean_abs) < 1e-12
        assert abs(report.actual_mean[j] - actual) < 1e-12
        assert abs(report.support_freq[j] - freq) < 1e-12
        assert abs(report.weighted_mean[j] - weighted) < 1e-12


def test_global_scores_input_validation():
    with pytest.raises(DataError):
        global_scores([])
    with pytest.raises(DataError):
        global_scores([explanation([1.0]), explanation([1.0, 2.0])])


# --- select_features ---------------------------------------------------------------


def _report_with_weighted(scores):
    exps = [explanation(scores)]
    return global_scores(exps, rank_by="weighted_mean")


def test_elbow_cumulative_arithmetic():
    report = _report_with_weighted([10.0, 5.0, 1.0, 0.5, 0.5])
    assert select_features(report, "elbow", threshold=0.90) == [0, 1, 2]


def test_elbow_uniform_scores_takes_ceiling():
    report = _report_with_weighted([1.0] * 10)
    assert len(select_features(report, "elbow", threshold=0.90)) == 9


def test_single_feature_always_selected():
    report = _report_with_weighted([0.7])
    assert select_features(report, "elbow", threshold=0.5) == [0]


def test_near_total_threshold_selects_all_nonzero():
    report = _report_with_weighted([5.0, 3.0, 1.0, 0.0])
    chosen = select_features(report, "elbow", threshold=0.999)
    assert chosen == [0, 1, 2]


def test_elbow_threshold_validation():
    report = _report_with_weighted([1.0, 2.0])
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ConfigError):
            select_features(report, "elbow", threshold=bad)


def test_forward_returns_full_candidate_order():
    report = _report_with_weighted([1.0, 5.0, 3.0])
    assert select_features(report, "forward") == [1, 2, 0]


def test_bootstrap_keeps_stable_features():
    rng = np.random.default_rng(5)
    # features 0 and 1 dominate every resample; 2..4 are noise
    exps = []
    for i in range(40):
        coeffs = np.concatenate(([3.0, 2.0], 0.05 * rng.standard_normal(3)))
        exps.append(explanation(coeffs, r2=0.9, index=i))
    report = global_scores(exps, rank_by="weighted_mean")
    chosen = select_features(
        report, "bootstrap", threshold=0.8, bootstrap_samples=50,
        inclusion_threshold=0.7, explanations=exps, seed=0,
    )
    assert set(chosen) >= {0, 1}


def test_bootstrap_requires_explanations():
    report = _report_with_weighted([1.0, 2.0])
    with pytest.raises(ConfigError, match="explanations"):
        select_features(report, "bootstrap", threshold=0.5)


def test_unknown_strategy_rejected():
    report = _report_with_weighted([1.0])
    with pytest.raises(ConfigError):
        select_features(report, "magic")


def test_lime_config_validation():
    with pytest.raises(ConfigError):
        LimeConfig(n_samples=1)
    with pytest.raises(ConfigError):
        LimeConfig(kernel_width=0.0)
    with pytest.raises(ConfigError):
        LimeConfig(distribution="poisson")
    with pytest.raises(ConfigError):
        LimeConfig(l1_penalty=-0.1)
    assert LimeConfig().width_for(4) == 0.75 * 2.0
