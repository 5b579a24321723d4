import numpy as np
import pytest

from soft_bermudan.approximator import (
    FitHyper, RegressionTask, ValueEstimator, mlp_loss_and_grad, monomial_exponents)
from soft_bermudan.errors import ConfigurationError, FitError, StateError

# solver defaults for the network
MLP_HYPER = FitHyper(epochs=30, batch=512, learning_rate=0.05, seed=0)


def smooth_put(u):
    return 2.0 * np.logaddexp(0.0, (100.0 - u) / 2.0)


@pytest.fixture(scope="module")
def put_data():
    rng = np.random.default_rng(0)
    x = rng.uniform(80, 120, 6000)
    xt = rng.uniform(80, 120, 2000)
    return x, smooth_put(x) + rng.normal(0, 1, x.size), xt, smooth_put(xt) + rng.normal(0, 1, xt.size)


def test_monomial_exponents():
    e = monomial_exponents(3, 2, 1)
    assert e.shape == (7, 3)
    assert np.all((e > 0).sum(axis=1) <= 1)
    e2 = monomial_exponents(2, 3, 2)
    assert e2.shape[0] == 10  # full degree-3 basis in two variables
    assert np.all(e2.sum(axis=1) <= 3)


@pytest.mark.parametrize("kind", ["poly_ls", "mlp"])
def test_constant_targets(kind):
    x = np.random.default_rng(1).normal(size=(500, 2))
    est = ValueEstimator(kind, 2).fit(RegressionTask(x, np.full(500, 3.5)), MLP_HYPER)
    np.testing.assert_allclose(est.predict(np.random.default_rng(2).normal(size=(50, 2))), 3.5, atol=1e-8)


def test_linear_recovery():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(400, 3)) * 10 + 50
    y = 1.5 + x @ np.array([0.3, -2.0, 0.7])
    est = ValueEstimator("poly_ls", 3, degree=2, ridge=0.0).fit(RegressionTask(x, y))
    xt = rng.normal(size=(100, 3)) * 10 + 50
    np.testing.assert_allclose(est.predict(xt), 1.5 + xt @ np.array([0.3, -2.0, 0.7]), atol=1e-8)


def test_mlp_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    hidden = (8, 6)
    x = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    n_params = sum(a * b + b for a, b in zip([3, 8, 6], [8, 6, 1]))
    params = rng.normal(0, 0.5, n_params)
    for act in ("tanh", "softplus"):
        _, grad = mlp_loss_and_grad(params, x, y, hidden, act)
        coords = rng.choice(n_params, 20, replace=False)
        h = 1e-6
        for c in coords:
            e = np.zeros(n_params)
            e[c] = h
            fd = (mlp_loss_and_grad(params + e, x, y, hidden, act)[0]
                  - mlp_loss_and_grad(params - e, x, y, hidden, act)[0]) / (2 * h)
            assert abs(grad[c] - fd) <= 1e-4 * max(abs(fd), 1e-3)


def test_mlp_competitive_with_polynomial(put_data):
    x, y, xt, yt = put_data
    poly = ValueEstimator("poly_ls", 1, degree=6).fit(RegressionTask(x, y))
    net = ValueEstimator("mlp", 1).fit(RegressionTask(x, y), MLP_HYPER)
    mse_poly = np.mean((poly.predict(xt) - yt) ** 2)
    mse_net = np.mean((net.predict(xt) - yt) ** 2)
    assert mse_net < 10 * mse_poly


def test_loss_histories(put_data):
    x, y, _, _ = put_data
    poly = ValueEstimator("poly_ls", 1, degree=6).fit(RegressionTask(x, y))
    assert len(poly.loss_history) == 1
    net = ValueEstimator("mlp", 1).fit(RegressionTask(x, y), MLP_HYPER)
    h = np.array(net.loss_history)
    assert h.size == 30
    assert np.all(h[10:] < h[:-10])


@pytest.mark.parametrize("kind", ["poly_ls", "mlp"])
def test_refit_is_bit_identical(put_data, kind):
    x, y, xt, _ = put_data
    a = ValueEstimator(kind, 1).fit(RegressionTask(x, y), MLP_HYPER)
    b = ValueEstimator(kind, 1).fit(RegressionTask(x, y), MLP_HYPER)
    assert np.array_equal(a.params, b.params)
    assert np.array_equal(a.predict(xt), b.predict(xt))


@pytest.mark.parametrize("kind", ["poly_ls", "mlp"])
def test_json_round_trip(put_data, kind):
    x, y, xt, _ = put_data
    est = ValueEstimator(kind, 1).fit(RegressionTask(x, y), MLP_HYPER)
    back = ValueEstimator.from_json(est.to_json())
    assert np.array_equal(est.predict(xt), back.predict(xt))
    assert back.loss_history == est.loss_history


@pytest.mark.parametrize("kind", ["poly_ls", "mlp"])
def test_prediction_continuous_and_finite(put_data, kind):
    x, y, _, _ = put_data
    est = ValueEstimator(kind, 1).fit(RegressionTask(x, y), MLP_HYPER)
    probe = np.linspace(60, 140, 101)
    for h in (1e-3, 1e-6, 1e-9):
        assert np.max(np.abs(est.predict(probe + h) - est.predict(probe))) < 1e3 * h
    assert np.all(np.isfinite(est.predict(np.array([-1e6, 0.0, 1e6]))))


def test_errors():
    est = ValueEstimator("poly_ls", 1, degree=4)
    with pytest.raises(StateError):
        est.predict(np.ones(3))
    with pytest.raises(StateError):
        est.to_json()
    with pytest.raises(FitError):
        est.fit(RegressionTask(np.arange(3.0), np.arange(3.0)))
    dup = np.repeat(np.arange(3.0), 10)
    with pytest.raises(FitError):
        ValueEstimator("poly_ls", 1, degree=4, ridge=0.0).fit(RegressionTask(dup, dup))
    # a ridge makes the same design solvable
    ValueEstimator("poly_ls", 1, degree=4, ridge=1e-8).fit(RegressionTask(dup, dup))
    with pytest.raises(ConfigurationError):
        ValueEstimator("forest", 1)
    with pytest.raises(ConfigurationError):
        RegressionTask(np.ones((3, 1)), np.ones(4))
    with pytest.raises(ConfigurationError):
        est.fit(RegressionTask(np.ones((30, 2)), np.ones(30)))


def test_weighted_fit_ignores_zero_weight_samples():
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 1, 200)
    y = 2 * x + 1
    y_bad = y.copy()
    y_bad[:20] += 50
    w = np.ones(200)
    w[:20] = 0.0
    est = ValueEstimator("poly_ls", 1, degree=1, ridge=0.0).fit(RegressionTask(x, y_bad, w))
    np.testing.assert_allclose(est.predict(x), y, atol=1e-8)


def test_adam_option(put_data):
    x, y, xt, yt = put_data
    est = ValueEstimator("mlp", 1).fit(RegressionTask(x, y), FitHyper(20, 256, 0.003, 0, "adam"))
    assert np.mean((est.predict(xt) - yt) ** 2) < 2.0
    with pytest.raises(ConfigurationError):
        ValueEstimator("mlp", 1).fit(RegressionTask(x, y), FitHyper(optimizer="lbfgs"))
