"""Mirrored-sampling evolution strategy with centered-rank shaping and Adam.

One generation is::

    batch = sample_pairs(state, config)          # eps_i, i < n_pairs
    fitness = [f(c) for c in batch.candidates()] # +eps_0, -eps_0, +eps_1, ...
    g = estimate_update(batch, centered_ranks(fitness), config)
    state = apply_update(state, g, config)

Perturbations come from numpy's PCG64 generator seeded through
``SeedSequence([seed, generation])``, so a run is exactly repeatable.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import ConfigError, NumericalFailure


@dataclass(frozen=True)
class EsConfig:
    sigma: float = 0.05
    learning_rate: float = 0.01
    n_pairs: int = 20
    weight_decay: float = 0.005
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.n_pairs < 1:
            raise ConfigError(f"n_pairs must be >= 1, got {self.n_pairs}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigError("adam betas must lie in [0, 1)")
        if not self.adam_epsilon > 0:
            raise ConfigError(f"adam_epsilon must be > 0, got {self.adam_epsilon}")


@dataclass(frozen=True)
class EsState:
    centroid: np.ndarray
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    generation: int = 0

    @classmethod
    def initial(cls, centroid) -> "EsState":
        centroid = np.array(centroid, dtype=float)
        if centroid.ndim != 1:
            raise ConfigError("centroid must be a flat vector")
        return cls(centroid, np.zeros_like(centroid), np.zeros_like(centroid))


@dataclass(frozen=True)
class PerturbationBatch:
    centroid: np.ndarray
    epsilons: np.ndarray  # (n_pairs, dim)
    sigma: float

    @property
    def n_pairs(self) -> int:
        return self.epsilons.shape[0]

    @property
    def n_candidates(self) -> int:
        return 2 * self.n_pairs

    def candidates(self) -> np.ndarray:
        """(2*n_pairs, dim) genomes; row 2i is centroid + sigma*eps_i, row 2i+1 its mirror."""
        step = self.sigma * self.epsilons
        out = np.empty((self.n_candidates, self.centroid.size))
        out[0::2] = self.centroid + step
        out[1::2] = self.centroid - step
        return out


def perturbation_rng(seed: int, generation: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, generation])))


def sample_pairs(state: EsState, config: EsConfig) -> PerturbationBatch:
    rng = perturbation_rng(config.seed, state.generation)
    eps = rng.standard_normal((config.n_pairs, state.centroid.size))
    return PerturbationBatch(state.centroid.copy(), eps, config.sigma)


def centered_ranks(fitnesses) -> np.ndarray:
    """Rank-based utilities in [-0.5, 0.5], ties broken by input position."""
    f = np.asarray(fitnesses, dtype=float)
    if f.ndim != 1 or f.size < 2:
        raise ValueError("centered_ranks needs a 1-d sequence of at least two fitnesses")
    if not np.all(np.isfinite(f)):
        raise NumericalFailure("non-finite fitness reached rank shaping")
    order = np.argsort(f, kind="stable")
    ranks = np.empty(f.size)
    ranks[order] = np.arange(f.size)
    return ranks / (f.size - 1) - 0.5


def estimate_update(batch: PerturbationBatch, utilities, config: EsConfig) -> np.ndarray:
    """Search-gradient estimate from mirrored utilities (candidate order as in ``candidates()``)."""
    u = np.asarray(utilities, dtype=float)
    if u.shape != (batch.n_candidates,):
        raise ValueError(f"expected {batch.n_candidates} utilities, got shape {u.shape}")
    diff = u[0::2] - u[1::2]
    return diff @ batch.epsilons / (batch.n_pairs * config.sigma)


def apply_update(state: EsState, g, config: EsConfig) -> EsState:
    g = np.asarray(g, dtype=float)
    if g.shape != state.centroid.shape:
        raise ValueError(f"gradient shape {g.shape} does not match centroid {state.centroid.shape}")
    if not np.all(np.isfinite(g)):
        raise NumericalFailure(f"non-finite gradient estimate at generation {state.generation}")
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.step_count + 1
    m = b1 * state.first_moment + (1 - b1) * g
    v = b2 * state.second_moment + (1 - b2) * g * g
    m_hat = m / (1 - b1 ** t)
    v_hat = v / (1 - b2 ** t)
    lr = config.learning_rate
    centroid = state.centroid * (1 - lr * config.weight_decay) + lr * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)
    if not np.all(np.isfinite(centroid)):
        raise NumericalFailure(f"centroid became non-finite at generation {state.generation}")
    return EsState(centroid, m, v, t, state.generation + 1)


@dataclass
class MirroredES:
    """Ask/tell wrapper around the functional steps above.

    >>> es = MirroredES(np.zeros(3), EsConfig(n_pairs=4, seed=1))
    >>> cands = es.ask()
    >>> es.tell(-np.sum(cands ** 2, axis=1))
    """

    x0: np.ndarray
    config: EsConfig = field(default_factory=EsConfig)

    def __post_init__(self):
        self.state = EsState.initial(self.x0)
        self._batch: PerturbationBatch | None = None

    @property
    def centroid(self) -> np.ndarray:
        return self.state.centroid

    def ask(self) -> np.ndarray:
        self._batch = sample_pairs(self.state, self.config)
        return self._batch.candidates()

    def tell(self, fitnesses) -> np.ndarray:
        if self._batch is None:
            raise RuntimeError("tell() called before ask()")
        g = estimate_update(self._batch, centered_ranks(fitnesses), self.config)
        self.state = apply_update(self.state, g, self.config)
        self._batch = None
        return g


def optimize(fitness: Callable[[np.ndarray], np.ndarray], x0, config: EsConfig,
             generations: int, target: float | None = None) -> tuple[EsState, list[float]]:
    """Maximise a batched objective ``fitness(candidates) -> values``.

    Returns the final state and the centroid fitness after every generation;
    stops early once the centroid reaches ``target``.
    """
    es = MirroredES(np.asarray(x0, dtype=float), config)
    history = []
    for _ in range(generations):
        es.tell(fitness(es.ask()))
        history.append(float(fitness(es.centroid[None, :])[0]))
        if target is not None and history[-1] >= target:
            break
    return es.state, history


__all__ = [
    "EsConfig", "EsState", "PerturbationBatch", "MirroredES",
    "sample_pairs", "centered_ranks", "estimate_update", "apply_update", "optimize",
    "perturbation_rng",
]
