import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from neuromod.estimator import NeuroEvolutionPolicy
from neuromod.exceptions import ConfigError


@pytest.fixture(scope="module")
def fitted():
    return NeuroEvolutionPolicy(env="walker", gating=True, hidden=6, generations=3, n_pairs=2,
                                max_steps=30).fit()


def test_params_and_clone():
    est = NeuroEvolutionPolicy(env="walker", sigma=0.1)
    params = est.get_params()
    assert params["env"] == "walker" and params["sigma"] == 0.1
    copy = clone(est.set_params(hidden=8))
    assert copy.get_params()["hidden"] == 8


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        NeuroEvolutionPolicy().predict(np.zeros((1, 17)))


def test_fit_and_predict(fitted):
    assert fitted.n_features_in_ == 30 and len(fitted.curve_) == 3
    actions = fitted.predict(np.random.default_rng(0).normal(size=(5, 30)))
    assert actions.shape == (5, 8) and np.all(np.abs(actions) <= 1)
    assert fitted.score() == fitted.curve_[-1].combined
    assert 0.0 <= fitted.behavior_gap() <= 1.0
    assert fitted.specialization().index.shape == (3,)


def test_predict_validates_input(fitted):
    with pytest.raises(ValueError):
        fitted.predict(np.zeros((2, 17)))
    with pytest.raises(ValueError):
        fitted.predict(np.full((1, 30), np.nan))


def test_fit_is_reproducible(fitted):
    again = clone(fitted).fit()
    assert np.array_equal(again.coef_, fitted.coef_)


def test_invalid_hyperparameters_fail_at_fit():
    with pytest.raises(ConfigError):
        NeuroEvolutionPolicy(strategy="greedy").fit()
