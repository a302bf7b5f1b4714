import numpy as np
import pytest

from confmc.algorithms.base_functions import ContractViolationError, NumericalFailureError
from confmc.completers import ALSCompleter, als_fit
from confmc.completers.als import spectral_init
from confmc.matrices import ObservedMatrix, RandomSource


def test_rank_one_fully_observed():
    M = np.outer([1., 2., -1., 0.5], [3., -1., 2.])
    factors = als_fit(ObservedMatrix(M, np.ones(M.shape, dtype=bool)), 1, ridge=0)
    assert np.linalg.norm(factors.m_hat - M) <= 1e-6 * np.linalg.norm(M)


def test_zero_values():
    train = ObservedMatrix(np.zeros((6, 5)), np.random.default_rng(0).random((6, 5)) < 0.7)
    factors = als_fit(train, 2, ridge=1.0, rng=RandomSource(3))
    assert np.allclose(factors.m_hat, 0)


def test_spectral_init_null_directions():
    train = ObservedMatrix(np.zeros((4, 4)), np.ones((4, 4), dtype=bool))
    U, V, sigma1 = spectral_init(train, 2, RandomSource(1))
    assert sigma1 == 0
    assert np.abs(U).max() > 0 and np.abs(U).max() < 1e-2

    U2, V2, _ = spectral_init(train, 2, RandomSource(1))
    assert np.array_equal(U, U2) and np.array_equal(V, V2)


def test_exact_recovery():
    errors = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((100, 3)) @ rng.standard_normal((3, 100))
        train = ObservedMatrix(M, rng.random(M.shape) < 0.8)
        m_hat = ALSCompleter(3, iters=100).complete(train)
        errors.append(np.linalg.norm(m_hat - M) / np.linalg.norm(M))
    assert max(errors) <= 1e-3


def test_objective_decreases():
    rng = np.random.default_rng(5)
    M = rng.standard_normal((30, 2)) @ rng.standard_normal((2, 25)) + 0.3 * rng.standard_normal((30, 25))
    factors = als_fit(ObservedMatrix(M, rng.random(M.shape) < 0.6), 4, iters=30)
    history = np.array(factors.objective_history)
    assert len(history) >= 2
    assert np.all(np.diff(history) <= 1e-9 * history[:-1])


def test_singular_normal_equations():
    rng = np.random.default_rng(0)
    mask = np.ones((5, 5), dtype=bool)
    mask[2, 1:] = False
    train = ObservedMatrix(rng.standard_normal((5, 5)), mask)
    with pytest.raises(NumericalFailureError) as excinfo:
        als_fit(train, 2, ridge=0)
    assert excinfo.value.location == 'row 2'

    als_fit(train, 2)


def test_rank_out_of_range():
    train = ObservedMatrix(np.ones((3, 4)), np.ones((3, 4), dtype=bool))
    for r in [0, 4]:
        with pytest.raises(ContractViolationError):
            als_fit(train, r)
