import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuromod.es_optimizer import (
    EsConfig,
    EsState,
    MirroredES,
    PerturbationBatch,
    apply_update,
    centered_ranks,
    estimate_update,
    optimize,
    sample_pairs,
)
from neuromod.exceptions import ConfigError, NumericalFailure

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
fitness_vectors = st.lists(finite, min_size=2, max_size=60)


@pytest.mark.parametrize(
    "kwargs",
    [dict(sigma=0), dict(learning_rate=-1), dict(n_pairs=0), dict(weight_decay=-0.1),
     dict(adam_beta1=1.0), dict(adam_beta2=-0.1), dict(adam_epsilon=0)],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        EsConfig(**kwargs)


def test_sample_pairs_deterministic():
    cfg = EsConfig(n_pairs=5, seed=42)
    state = EsState.initial(np.zeros(7))
    a, b = sample_pairs(state, cfg), sample_pairs(state, cfg)
    assert np.array_equal(a.epsilons, b.epsilons)
    later = EsState(state.centroid, state.first_moment, state.second_moment, 1, 1)
    assert not np.array_equal(a.epsilons, sample_pairs(later, cfg).epsilons)


def test_sample_pairs_statistics():
    batch = sample_pairs(EsState.initial(np.zeros(100)), EsConfig(n_pairs=512, seed=3))
    assert batch.epsilons.shape == (512, 100)
    assert abs(batch.epsilons.mean()) <= 0.02
    assert batch.epsilons.std() == pytest.approx(1.0, abs=0.02)


def test_mirrored_candidates():
    centroid = np.array([1.0, -2.0, 0.5])
    batch = sample_pairs(EsState.initial(centroid), EsConfig(n_pairs=4, sigma=0.3, seed=1))
    c = batch.candidates()
    assert c.shape == (8, 3)
    for j in range(4):
        np.testing.assert_allclose(c[2 * j] - c[2 * j + 1], 2 * 0.3 * batch.epsilons[j], rtol=0, atol=1e-15)
        np.testing.assert_allclose((c[2 * j] + c[2 * j + 1]) / 2, centroid, rtol=0, atol=1e-15)


@pytest.mark.parametrize(
    "fitness, expected",
    [([3.0, 1.0, 2.0], [0.5, -0.5, 0.0]), ([5.0, 5.0], [-0.5, 0.5]), ([1.0, 1.0, 1.0], [-0.5, 0.0, 0.5])],
)
def test_centered_ranks_examples(fitness, expected):
    assert np.array_equal(centered_ranks(fitness), expected)


def test_centered_ranks_rejects_bad_input():
    with pytest.raises(NumericalFailure):
        centered_ranks([1.0, np.nan])
    with pytest.raises(ValueError):
        centered_ranks([1.0])


@settings(max_examples=200, deadline=None)
@given(fitness_vectors, st.randoms(use_true_random=False))
def test_centered_ranks_properties(f, rnd):
    u = centered_ranks(f)
    assert abs(u.sum()) <= 1e-12
    assert u.min() >= -0.5 and u.max() <= 0.5
    # distinct values: permutation-equivariant
    f_unique = list(dict.fromkeys(f))
    if len(f_unique) >= 2:
        perm = list(range(len(f_unique)))
        rnd.shuffle(perm)
        u1 = centered_ranks(f_unique)
        u2 = centered_ranks([f_unique[i] for i in perm])
        assert np.array_equal(u2, u1[perm])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-500, 500), min_size=2, max_size=40))
def test_centered_ranks_monotone_invariance(f):
    # a 0.1 grid keeps exp() strictly monotone in floating point
    x = np.array(f) / 10.0
    assert np.array_equal(centered_ranks(x), centered_ranks(np.exp(x)))
    assert np.array_equal(centered_ranks(x), centered_ranks(x * 3.0 + 7.0))


def test_estimate_update_linear_objective():
    batch = PerturbationBatch(np.zeros(4), np.array([[1.0, 0.0, 0.0, 0.0]]), 1.0)
    cands = batch.candidates()
    u = centered_ranks(cands[:, 0])
    assert np.array_equal(u, [0.5, -0.5])
    g = estimate_update(batch, u, EsConfig(sigma=1.0, n_pairs=1))
    assert np.array_equal(g, [1.0, 0.0, 0.0, 0.0])


def test_estimate_update_symmetric_cancellation():
    batch = sample_pairs(EsState.initial(np.zeros(5)), EsConfig(n_pairs=3, seed=0))
    g = estimate_update(batch, [0.1, 0.1, -0.3, -0.3, 0.2, 0.2], EsConfig(n_pairs=3))
    assert np.array_equal(g, np.zeros(5))


def test_estimate_update_shift_invariance():
    cfg = EsConfig(n_pairs=6, seed=9)
    batch = sample_pairs(EsState.initial(np.ones(4)), cfg)
    f = -np.sum(batch.candidates() ** 2, axis=1)
    g1 = estimate_update(batch, centered_ranks(f), cfg)
    g2 = estimate_update(batch, centered_ranks(f + 123.0), cfg)
    assert np.array_equal(g1, g2)


def test_estimate_update_length_mismatch():
    batch = sample_pairs(EsState.initial(np.zeros(3)), EsConfig(n_pairs=2))
    with pytest.raises(ValueError):
        estimate_update(batch, [0.0, 0.0, 0.0], EsConfig(n_pairs=2))


def quadratic_cosines(n_seeds=20, dim=10, n_pairs=256):
    """Cosine between the ES direction and the closed-form gradient 2(theta* - theta)."""
    out = []
    for seed in range(n_seeds):
        rng = np.random.default_rng(1000 + seed)
        theta, target = rng.normal(size=dim), rng.normal(size=dim)
        cfg = EsConfig(n_pairs=n_pairs, sigma=0.05, seed=seed)
        batch = sample_pairs(EsState.initial(theta), cfg)
        f = -np.sum((batch.candidates() - target) ** 2, axis=1)
        g = estimate_update(batch, centered_ranks(f), cfg)
        analytic = 2 * (target - theta)
        out.append(g @ analytic / (np.linalg.norm(g) * np.linalg.norm(analytic)))
    return np.array(out)


def test_gradient_estimate_aligns_with_analytic_gradient():
    assert quadratic_cosines().mean() >= 0.8


def test_apply_update_null_gradient():
    cfg = EsConfig(weight_decay=0.0)
    state = EsState(np.array([1.0, -2.0]), np.array([0.5, 0.5]), np.array([0.2, 0.2]), 3, 3)
    new = apply_update(state, np.zeros(2), cfg)
    # stored momentum still moves the centroid
    step = (0.9 * 0.5 / (1 - 0.9**4)) / (np.sqrt(0.999 * 0.2 / (1 - 0.999**4)) + 1e-8)
    np.testing.assert_allclose(new.centroid, state.centroid + cfg.learning_rate * step, rtol=1e-14)
    assert np.all(np.abs(new.first_moment) < np.abs(state.first_moment))
    assert np.all(new.second_moment < state.second_moment)
    assert (new.step_count, new.generation) == (4, 4)


def test_apply_update_from_rest_with_zero_gradient_is_identity():
    state = EsState.initial(np.array([0.3, -0.7]))
    new = apply_update(state, np.zeros(2), EsConfig(weight_decay=0.0))
    assert np.array_equal(new.centroid, state.centroid)


@pytest.mark.parametrize("c", [3.0, -0.01, 250.0])
def test_apply_update_first_step_moves_by_learning_rate(c):
    cfg = EsConfig(learning_rate=0.02, weight_decay=0.0)
    state = EsState.initial(np.zeros(6))
    new = apply_update(state, np.full(6, c), cfg)
    np.testing.assert_allclose(new.centroid, 0.02 * np.sign(c), rtol=1e-6)


def test_apply_update_decoupled_decay():
    cfg = EsConfig(learning_rate=0.01, weight_decay=0.1)
    state = EsState.initial(np.array([2.0, -4.0, 1e-3]))
    new = apply_update(state, np.zeros(3), cfg)
    assert np.array_equal(new.centroid, state.centroid * 0.999)


def test_apply_update_rejects_non_finite():
    state = EsState.initial(np.zeros(2))
    with pytest.raises(NumericalFailure):
        apply_update(state, np.array([np.inf, 0.0]), EsConfig())
    with pytest.raises(ValueError):
        apply_update(state, np.zeros(3), EsConfig())


def sphere_run(seed, generations=300):
    rng = np.random.default_rng(500 + seed)
    target = rng.normal(size=20)
    direction = rng.normal(size=20)
    x0 = target + 5.0 * direction / np.linalg.norm(direction)

    def f(c):
        return -np.sum((c - target) ** 2, axis=1)

    cfg = EsConfig(n_pairs=16, sigma=0.05, learning_rate=0.05, seed=seed)
    _, history = optimize(f, x0, cfg, generations, target=-0.01)
    return history


def test_sphere_convergence():
    reached = [sphere_run(seed)[-1] >= -0.01 for seed in range(10)]
    assert sum(reached) >= 9


def test_trajectory_is_deterministic():
    a, b = sphere_run(3, generations=40), sphere_run(3, generations=40)
    assert a == b


def test_ask_tell_protocol():
    es = MirroredES(np.zeros(3), EsConfig(n_pairs=4, seed=1))
    with pytest.raises(RuntimeError):
        es.tell(np.zeros(8))
    cands = es.ask()
    assert cands.shape == (8, 3)
    es.tell(-np.sum((cands - 1.0) ** 2, axis=1))
    assert es.state.generation == 1
    assert np.all(es.centroid > 0)
