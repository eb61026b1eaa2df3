import numpy as np
import pytest
from sklearn.base import clone
from sklearn.utils.estimator_checks import check_estimator

from hybrid_ias import IASRegressor
from hybrid_ias.forward import build_deconv_1d, example1_signal, synth_data


def test_sklearn_conventions():
    check_estimator(IASRegressor(mode="plain", vartheta1=1.0))


def test_recovers_jumps():
    n, m = 500, 91
    t = np.linspace(0, 1, n)
    A = build_deconv_1d(n, m, 40)
    x = example1_signal(t)
    b, sigma = synth_data(A, x, 2.0, 0)
    est = IASRegressor(representation="increments1d", noise_std=sigma).fit(A, b * sigma)
    jumps = np.flatnonzero(np.abs(est.latent_coef_) > 1e-3 * np.abs(est.latent_coef_).max())
    assert np.all(np.abs(jumps - np.flatnonzero(np.diff(x, prepend=0))) <= 1)
    assert est.converged_ and est.coef_.shape == (n,)
    assert est.score(A, A @ x) > 0.99
    assert len(est.trace_) == est.n_iter_


def test_parameters_and_validation():
    est = IASRegressor(mode="local", t_bar=3)
    assert clone(est).get_params()["t_bar"] == 3
    X, y = np.eye(4), np.ones(4)
    with pytest.raises(ValueError):
        IASRegressor(mode="bogus").fit(X, y)
    with pytest.raises(ValueError):
        IASRegressor(vartheta1="big").fit(X, y)
    with pytest.raises(ValueError):
        IASRegressor(noise_std=0).fit(X, y)
    est = IASRegressor(vartheta1="sensitivity", mode="local").fit(X, y)
    with pytest.raises(ValueError):
        est.predict(np.eye(3))
