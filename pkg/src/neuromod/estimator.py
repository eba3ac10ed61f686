"""scikit-learn style front end for training a cue-switched policy.

``fit`` runs the evolution strategy on the chosen surrogate; ``predict`` maps
observations to motor commands with the evolved centroid.  Hyperparameters
follow the ``get_params``/``set_params`` protocol, so ``clone`` and
parameter grids work as usual::

    policy = NeuroEvolutionPolicy(env="hopper", strategy="paired", generations=50)
    policy.fit()
    actions = policy.predict(observations)
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .evaluation import behavior_gap, specialization_report
from .policy_net import forward_batch
from .training import RunConfig, log_progress, train


class NeuroEvolutionPolicy(BaseEstimator):
    def __init__(self, env="hopper", strategy="paired", gating=False, hidden=16, generations=300,
                 n_pairs=40, sigma=0.05, learning_rate=0.01, weight_decay=0.005, max_steps=500,
                 seed=0, verbose=False):
        self.env = env
        self.strategy = strategy
        self.gating = gating
        self.hidden = hidden
        self.generations = generations
        self.n_pairs = n_pairs
        self.sigma = sigma
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.max_steps = max_steps
        self.seed = seed
        self.verbose = verbose

    def _run_config(self) -> RunConfig:
        return RunConfig(env=self.env, strategy=self.strategy, gating=bool(self.gating),
                         hidden=int(self.hidden), generations=int(self.generations),
                         n_pairs=int(self.n_pairs), sigma=float(self.sigma),
                         learning_rate=float(self.learning_rate), weight_decay=float(self.weight_decay),
                         max_steps=int(self.max_steps), seed=int(self.seed), replications=1)

    def fit(self, X=None, y=None):
        """Evolve the policy.  ``X`` and ``y`` are ignored; training data comes
        from the environment."""
        config = self._run_config()
        result = train(config, on_generation=log_progress if self.verbose else None)
        self.topology_ = config.topology()
        self.coef_ = result.params
        self.curve_ = result.curve
        self.n_features_in_ = self.topology_.n_inputs
        return self

    def predict(self, X) -> np.ndarray:
        """Motor commands in [-1, 1] for each observation row."""
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64, ensure_all_finite=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, but the policy expects {self.n_features_in_}")
        params = np.broadcast_to(self.coef_, (X.shape[0], self.coef_.size))
        return forward_batch(params, self.topology_, X)[0]

    def score(self, X=None, y=None) -> float:
        """Combined centroid fitness (B1 episode + B2 episode) after the last generation."""
        check_is_fitted(self, "coef_")
        return float(self.curve_[-1].combined)

    def behavior_gap(self) -> float:
        check_is_fitted(self, "coef_")
        return behavior_gap(self.coef_, self.topology_, self.env, max_steps=self.max_steps)

    def specialization(self, n_episodes: int = 1):
        check_is_fitted(self, "coef_")
        return specialization_report(self.coef_, self.topology_, self.env, range(n_episodes), self.max_steps)
