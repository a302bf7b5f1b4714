import numpy as np
import pytest

from confmc.algorithms.base_functions import ContractViolationError
from confmc.completers import (
    AbstractCompleter, FactorModel, DegenerateScaleWarning, ALSCompleter,
    estimate_noise, estimate_local_scale, model_based_intervals, standardized_scores,
)
from confmc.matrices import ObservedMatrix


def test_abstract_fit():
    with pytest.raises(NotImplementedError):
        AbstractCompleter().fit(ObservedMatrix(np.ones((2, 2)), np.ones((2, 2), dtype=bool)))


def test_factor_model():
    model = FactorModel(np.ones((3, 2)), np.ones((4, 2)))
    assert model.rank == 2 and model.m_hat.shape == (3, 4)
    with pytest.raises(ContractViolationError):
        FactorModel(np.ones((3, 2)), np.ones((4, 1)))
    with pytest.raises(ContractViolationError):
        FactorModel(np.full((3, 1), np.nan), np.ones((4, 1)))


def test_estimate_noise():
    train = ObservedMatrix(np.arange(6.).reshape(2, 3), np.array([[True, True, False], [True, True, True]]))
    assert estimate_noise(train, np.arange(6.).reshape(2, 3)) == 0
    assert estimate_noise(train, np.arange(6.).reshape(2, 3) - 2) == pytest.approx(4)

    empty = ObservedMatrix(np.ones((2, 2)), np.zeros((2, 2), dtype=bool))
    with pytest.raises(ContractViolationError):
        estimate_noise(empty, np.ones((2, 2)))


def test_estimate_local_scale():
    factors = FactorModel(np.array([[0.6], [0.8]]), np.array([[0.8], [0.6]]))
    theta2, s_hat = estimate_local_scale(factors, 1.0, 0.5)
    assert theta2[0, 0] == pytest.approx(2.0)
    assert s_hat[0, 0] == pytest.approx(np.sqrt(3))
    assert theta2[1, 1] == pytest.approx(2 * (0.64 + 0.36))

    with pytest.warns(DegenerateScaleWarning):
        theta2, s_hat = estimate_local_scale(factors, 0.0, 0.5)
    assert np.all(theta2 == 0) and np.all(s_hat == 1e-12)

    for p in [0, -0.1, 1.5]:
        with pytest.raises(ContractViolationError):
            estimate_local_scale(factors, 1.0, p)


def test_model_based_intervals():
    m_hat = np.array([[1., 2.], [3., 4.]])
    intervals = model_based_intervals(m_hat, np.ones((2, 2)), 0.3173)
    assert np.allclose(intervals.upper - m_hat, 1.0, atol=1e-3)
    assert np.allclose(m_hat - intervals.lower, 1.0, atol=1e-3)

    zero_width = model_based_intervals(m_hat, np.zeros((2, 2)), 0.1)
    assert np.array_equal(zero_width.lower, m_hat) and np.array_equal(zero_width.upper, m_hat)

    wide = model_based_intervals(m_hat, np.ones((2, 2)), 0.05)
    narrow = model_based_intervals(m_hat, np.ones((2, 2)), 0.2)
    assert np.all(wide.lower <= narrow.lower) and np.all(narrow.upper <= wide.upper)

    target = np.array([[True, False], [False, False]])
    partial = model_based_intervals(m_hat, np.ones((2, 2)), 0.1, target)
    assert np.isnan(partial.lower[1, 1]) and not np.isnan(partial.lower[0, 0])


def test_standardized_scores():
    mask = np.array([[True, False], [False, True]])
    scores = standardized_scores(np.zeros((2, 2)), np.array([[2., 9.], [9., -1.]]), np.array([[2., 1.], [1., 0.5]]), mask)
    assert np.allclose(scores, [1., -2.])


def test_estimate_without_local_scale():
    rng = np.random.default_rng(0)
    M = np.outer(rng.standard_normal(10), rng.standard_normal(8))
    train = ObservedMatrix(M, rng.random(M.shape) < 0.7)
    est = ALSCompleter(1).estimate(train, local_scale=False)
    assert np.all(est.s_hat == 1) and np.all(est.theta2_hat == 0)

    est = ALSCompleter(1).estimate(train)
    assert est.s_hat.shape == M.shape and np.all(est.s_hat > 0)
    assert est.factors.rank == 1
