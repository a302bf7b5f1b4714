import numpy as np
import pytest

from confmc.algorithms.base_functions import ContractViolationError
from confmc.matrices import ObservedMatrix, MaskSplit, RandomSource, observe, split_observed


def test_init():
    values = np.arange(6, dtype=float).reshape(2, 3)
    mask = np.array([[True, False, True], [False, False, True]])
    obs = ObservedMatrix(values, mask)

    assert obs.dims == (2, 3)
    assert obs.n_observed == 3
    assert np.isnan(obs.values[0, 1]) and obs.values[1, 2] == 5
    assert np.array_equal(obs.unobserved_mask, ~mask)
    assert np.array_equal(obs.zero_filled(), [[0, 0, 2], [0, 0, 5]])

    with pytest.raises(ValueError):
        obs.values[0, 0] = 10

    with pytest.raises(ContractViolationError):
        ObservedMatrix(values, mask[:, :2])


def test_restrict_and_augment():
    obs = ObservedMatrix(np.ones((2, 2)), np.array([[True, True], [False, True]]))
    restricted = obs.restrict(np.array([[True, False], [True, False]]))
    assert np.array_equal(restricted.mask, [[True, False], [False, False]])

    augmented = obs.augment(1, 0, 4.5)
    assert augmented.mask.all() and augmented.values[1, 0] == 4.5
    assert not obs.mask[1, 0]


def test_require_observations():
    obs = ObservedMatrix(np.ones((2, 2)), np.zeros((2, 2), dtype=bool))
    with pytest.raises(ContractViolationError, match='empty observation set'):
        obs.require_observations('a trial')


def test_observe():
    full = np.arange(12, dtype=float).reshape(3, 4)
    obs = observe(full, np.ones(full.shape), RandomSource(0))
    assert obs.mask.all() and np.array_equal(obs.values, full)

    obs = observe(full, np.zeros(full.shape), RandomSource(0))
    assert not obs.mask.any()

    a = observe(full, np.full(full.shape, 0.5), RandomSource(3))
    b = observe(full, np.full(full.shape, 0.5), RandomSource(3))
    assert np.array_equal(a.mask, b.mask)

    with pytest.raises(ContractViolationError):
        observe(full, np.ones((2, 2)), RandomSource(0))
    with pytest.raises(ContractViolationError):
        observe(full, np.full(full.shape, 1.5), RandomSource(0))


def test_observe_fraction():
    full = np.zeros((100, 100))
    fractions = [observe(full, np.full(full.shape, 0.8), RandomSource(seed)).mask.mean() for seed in range(500)]
    assert abs(np.mean(fractions) - 0.8) <= 0.02


def test_split_observed():
    mask = np.zeros((10, 10), dtype=bool)
    mask.flat[:60] = True
    obs = ObservedMatrix(np.ones((10, 10)), mask)

    n_train = []
    for seed in range(2000):
        split = split_observed(obs, 0.5, RandomSource(seed))
        assert not (split.train_mask & split.cal_mask).any()
        assert np.array_equal(split.observed_mask, obs.mask)
        n_train.append(split.n_train)
    assert abs(np.mean(n_train) - 30) <= 1

    empty = ObservedMatrix(np.ones((3, 3)), np.zeros((3, 3), dtype=bool))
    split = split_observed(empty, 0.5, RandomSource(0))
    assert split.n_train == 0 and split.n_cal == 0

    for q in [0, 1, 1.5]:
        with pytest.raises(ContractViolationError):
            split_observed(obs, q, RandomSource(0))


def test_mask_split_disjoint():
    mask = np.array([[True, False]])
    with pytest.raises(ContractViolationError):
        MaskSplit(mask, mask, 0.5)
