import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robofruit_sim.gpr import (
    GprModel,
    GprSample,
    NotPositiveDefinite,
    correct_picking_point,
    fit,
    kernel_eval,
    model_from_json,
    model_to_json,
    predict,
    samples_from_csv,
    samples_to_csv,
)


def _random_problem(rng, n, d):
    # Labels are always 3-vectors: per-axis picking point offsets.
    X = rng.normal(size=(n, d))
    y = rng.normal(size=(n, 3))
    return [GprSample(features=X[i], label=y[i]) for i in range(n)]


def _dense_predict(samples, query, sigma0_sq, jitter):
    """Brute-force GP mean with the inhomogeneous dot-product kernel."""
    X = np.array([s.features for s in samples], dtype=float)
    Y = np.array([s.label for s in samples], dtype=float)
    K = X @ X.T + sigma0_sq + jitter * np.eye(len(samples))
    k_star = X @ np.asarray(query, float) + sigma0_sq
    return k_star @ np.linalg.solve(K, Y)


def test_kernel_is_dot_product_plus_offset():
    x = np.array([1.0, 2.0, 3.0])
    y = np.array([-1.0, 0.5, 2.0])
    assert kernel_eval(x, y, sigma0_sq=1.5) == pytest.approx(1.5 + 1.0 * -1 + 2 * 0.5 + 3 * 2)
    assert kernel_eval(x, y, sigma0_sq=0.0) == pytest.approx(float(x @ y))


def test_predict_matches_dense_solve():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(2, 21))
        samples = _random_problem(rng, n, 12)
        model = fit(samples, sigma0_sq=1.0, jitter=1e-6)
        q = rng.normal(size=12)
        mean, _ = predict(model, q)
        want = _dense_predict(samples, q, 1.0, 1e-6)
        np.testing.assert_allclose(mean, want, atol=1e-8)


def test_zero_offset_equals_ridge_regression_through_origin():
    # sigma0_sq = 0 on 1-D inputs: prediction is w * x with
    # w = sum(x y) / (sum(x^2) + jitter).
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(2, 15))
        x = rng.normal(size=n)
        y = 0.7 * x + rng.normal(scale=0.05, size=n)
        jitter = 1e-6
        samples = [GprSample(features=np.array([xi]),
                             label=np.array([yi, 0.0, 0.0]))
                   for xi, yi in zip(x, y)]
        model = fit(samples, sigma0_sq=0.0, jitter=jitter)
        w = float(x @ y) / (float(x @ x) + jitter)
        for q in (-2.0, 0.3, 1.7):
            mean, _ = predict(model, np.array([q]))
            assert mean[0] == pytest.approx(w * q, abs=1e-4)


def test_interpolates_training_points_with_small_jitter():
    # The dot-product kernel spans an affine model of rank d + 1, so it can
    # interpolate at most d + 1 points in general position.
    rng = np.random.default_rng(2)
    samples = _random_problem(rng, 6, 5)
    model = fit(samples, sigma0_sq=1.0, jitter=1e-10)
    for s in samples:
        mean, _ = predict(model, s.features)
        np.testing.assert_allclose(mean, s.label, atol=1e-5)


def test_standardize_matches_manual_scaling():
    rng = np.random.default_rng(3)
    X = rng.normal(loc=5.0, scale=(0.1, 3.0, 40.0), size=(10, 3))
    Y = rng.normal(size=(10, 3))
    raw = [GprSample(x, y) for x, y in zip(X, Y)]
    mu, sd = X.mean(axis=0), X.std(axis=0)
    scaled = [GprSample((x - mu) / sd, y) for x, y in zip(X, Y)]
    a = fit(raw, sigma0_sq=1.0, jitter=1e-6, standardize=True)
    b = fit(scaled, sigma0_sq=1.0, jitter=1e-6, standardize=False)
    q = rng.normal(loc=5.0, size=3)
    np.testing.assert_allclose(predict(a, q)[0],
                               predict(b, (q - mu) / sd)[0], atol=1e-10)


def test_standardize_survives_constant_feature():
    # A zero-variance column must not divide by zero.
    X = np.column_stack([np.ones(6), np.linspace(-1, 1, 6)])
    Y = np.column_stack([np.linspace(0, 1, 6)] * 3)
    samples = [GprSample(x, y) for x, y in zip(X, Y)]
    model = fit(samples, standardize=True)
    mean, _ = predict(model, np.array([1.0, 0.5]))
    assert np.isfinite(mean).all()


def test_duplicate_rows_without_jitter_rejected():
    s = GprSample(np.array([1.0, 2.0]), np.array([0.5, 0.0, 0.0]))
    with pytest.raises(NotPositiveDefinite):
        fit([s, s], sigma0_sq=1.0, jitter=0.0)


def test_predict_variance_nonnegative_and_shrinks_at_training_points():
    rng = np.random.default_rng(4)
    samples = _random_problem(rng, 10, 4)
    model = fit(samples, sigma0_sq=1.0, jitter=1e-6)
    _, var_train = predict(model, samples[0].features)
    _, var_far = predict(model, samples[0].features + 50.0)
    assert (var_train >= 0).all() and (var_far >= 0).all()
    assert var_far[0] > var_train[0]


def test_correction_subtracts_predicted_offset():
    rng = np.random.default_rng(5)
    samples = _random_problem(rng, 6, 3)
    model = fit(samples)
    pose = np.array([0.4, 0.0, 0.33])
    q = rng.normal(size=3)
    mean, _ = predict(model, q)
    np.testing.assert_allclose(correct_picking_point(pose, model, q),
                               pose - mean, atol=1e-12)


def test_model_json_round_trip_preserves_predictions():
    rng = np.random.default_rng(6)
    samples = _random_problem(rng, 9, 7)
    model = fit(samples, sigma0_sq=2.0, jitter=1e-5, standardize=True)
    clone = model_from_json(model_to_json(model))
    q = rng.normal(size=7)
    np.testing.assert_array_equal(predict(model, q)[0], predict(clone, q)[0])
    assert clone.sigma0_sq == model.sigma0_sq
    assert clone.standardize == model.standardize


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_samples_csv_round_trip(n, d, seed):
    rng = np.random.default_rng(seed)
    samples = _random_problem(rng, n, d)
    back = samples_from_csv(samples_to_csv(samples))
    assert len(back) == len(samples)
    for a, b in zip(samples, back):
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.label, b.label)


def test_fit_rejects_inconsistent_shapes():
    bad = [GprSample(np.array([1.0, 2.0]), np.zeros(3)),
           GprSample(np.array([1.0]), np.zeros(3))]
    with pytest.raises(ValueError):
        fit(bad)
    with pytest.raises(ValueError):
        fit([])
