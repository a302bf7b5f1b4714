import numpy as np
import pytest

from confmc.algorithms.base_functions import ContractViolationError
from confmc.algorithms.conformal import (
    WeightedEmpirical, RefitFailureWarning, weighted_quantile, residuals, oneshot_weights, oracle_weights,
    cmc_intervals, exact_split_intervals, full_cmc_intervals, full_sets_to_intervals, default_grid,
    estimation_gap, mean_estimation_gap,
)
from confmc.completers import CompletionEstimate
from confmc.matrices import ObservedMatrix, MaskSplit, RandomSource
from confmc.propensity import PropensityModel


def _scan_quantile(atoms, weights, level):
    order = np.argsort(atoms, kind='stable')
    total = 0.0
    for k in order:
        total += weights[k]
        if total >= level:
            return atoms[k]
    return np.inf


def test_weighted_empirical_checks():
    with pytest.raises(ContractViolationError):
        WeightedEmpirical(np.array([1., 2.]), np.array([0.5, 0.6]))
    with pytest.raises(ContractViolationError):
        WeightedEmpirical(np.array([np.inf, np.inf]), np.array([0.5, 0.5]))
    with pytest.raises(ContractViolationError):
        WeightedEmpirical(np.array([np.nan]), np.array([1.]))
    with pytest.raises(ContractViolationError):
        WeightedEmpirical(np.array([]), np.array([]))


def test_weighted_quantile():
    dist = WeightedEmpirical(np.array([1., 2., 3., np.inf]), np.full(4, 0.25))
    assert weighted_quantile(dist, 0.5) == 2
    assert weighted_quantile(dist, 0.9) == np.inf
    assert weighted_quantile(WeightedEmpirical(np.array([np.inf]), np.array([1.])), 0.1) == np.inf
    with pytest.raises(ContractViolationError):
        weighted_quantile(dist, 1.0)


def test_weighted_quantile_matches_scan():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 51))
        atoms = rng.standard_normal(n).round(1)
        if rng.random() < 0.5:
            atoms[-1] = np.inf
        weights = rng.random(n)
        weights /= weights.sum()
        level = float(rng.uniform(0.01, 0.99))
        assert weighted_quantile(WeightedEmpirical(atoms, weights), level) == _scan_quantile(atoms, weights, level)


def test_weighted_quantile_just_above_cumulative_mass():
    dist = WeightedEmpirical(np.array([1., 2.]), np.array([0.3, 0.7]))
    assert weighted_quantile(dist, 0.3) == 1
    assert weighted_quantile(dist, 0.3 + 5e-13) == 2


def test_residuals():
    cal = ObservedMatrix(np.array([[5., 1.], [2., 0.]]), np.array([[True, False], [True, False]]))
    scores = residuals(cal, np.array([[3., 0.], [2., 0.]]), np.array([[2., 1.], [1., 1.]]))
    assert scores[0, 0] == 1 and scores[1, 0] == 0
    assert np.isnan(scores[0, 1])

    custom = residuals(cal, np.zeros((2, 2)), np.ones((2, 2)), score=lambda v, m, s: v - m)
    assert custom[0, 0] == 5

    with pytest.raises(ContractViolationError):
        residuals(cal, np.zeros((2, 2)), np.zeros((2, 2)))


def test_oneshot_weights():
    cal_mask = np.array([[True, True, True, False]])
    test_mask = ~cal_mask
    weights, w_test = oneshot_weights(np.ones((1, 4)), cal_mask, test_mask)
    assert np.allclose(weights, 0.25) and w_test == pytest.approx(0.25)

    H = np.array([[1., 1., 2., 0.5]])
    weights, w_test = oneshot_weights(H, np.array([[True, True, False, False]]), np.array([[False, False, True, True]]))
    assert np.allclose(weights, [0.25, 0.25]) and w_test == pytest.approx(0.5)

    with pytest.raises(ContractViolationError):
        oneshot_weights(H, cal_mask, np.zeros((1, 4), dtype=bool))


def test_oracle_weights():
    P = np.array([[0.5, 0.8], [0.5, 0.5]])
    cal_mask = np.array([[True, True], [False, False]])
    weights, w_test = oracle_weights(P, cal_mask, ~cal_mask)
    assert np.allclose(weights, [1 / 2.25, 0.25 / 2.25]) and w_test == pytest.approx(1 / 2.25)


def _toy_problem(cal_residuals, H=None):
    """One row of calibration entries with the given residuals, followed by two unobserved targets"""
    n_cal = len(cal_residuals)
    d2 = n_cal + 2
    values = np.zeros((1, d2))
    values[0, :n_cal] = cal_residuals
    cal_mask = np.zeros((1, d2), dtype=bool)
    cal_mask[0, :n_cal] = True
    split = MaskSplit(np.zeros((1, d2), dtype=bool), cal_mask, 0.5)
    est = CompletionEstimate(np.zeros((1, d2)), np.ones((1, d2)), 1.0, np.zeros((1, d2)))
    H = np.ones((1, d2)) if H is None else H
    prop = PropensityModel(1 / (1 + H), 'oracle')
    return est, prop, split, ObservedMatrix(values, cal_mask)


def test_cmc_intervals_quantile():
    est, prop, split, obs = _toy_problem([0.5, 1.0, 1.5])
    intervals = cmc_intervals(est, prop, split, obs, alpha=0.5)
    assert intervals.q_hat == pytest.approx(1.0)
    assert np.allclose(intervals.upper[0, 3:], 1.0) and np.allclose(intervals.lower[0, 3:], -1.0)
    assert np.isnan(intervals.lower[0, :3]).all()

    intervals = cmc_intervals(est, prop, split, obs, alpha=0.1)
    assert intervals.q_hat == np.inf and intervals.is_infinite


def test_cmc_intervals_nested_in_alpha():
    rng = np.random.default_rng(3)
    est, prop, split, obs = _toy_problem(np.abs(rng.standard_normal(40)))
    q_hats = [cmc_intervals(est, prop, split, obs, alpha).q_hat for alpha in [0.5, 0.3, 0.2, 0.1, 0.05]]
    assert np.all(np.diff(q_hats) >= 0)


def test_cmc_intervals_uniform_weights_exceedances():
    rng = np.random.default_rng(11)
    for _ in range(300):
        n_cal = int(rng.integers(1, 80))
        alpha = float(rng.uniform(0.02, 0.5))
        h = float(rng.uniform(0.2, 4))
        cal_residuals = np.abs(rng.standard_normal(n_cal))
        est, prop, split, obs = _toy_problem(cal_residuals, np.full((1, n_cal + 2), h))
        q_hat = cmc_intervals(est, prop, split, obs, alpha).q_hat
        assert (cal_residuals > q_hat).sum() <= np.ceil((n_cal + 1) * alpha) - 1


def test_cmc_intervals_no_calibration():
    est, prop, split, obs = _toy_problem([])
    intervals = cmc_intervals(est, prop, split, obs, alpha=0.1)
    assert intervals.q_hat == np.inf


def test_cmc_intervals_no_targets():
    est, prop, split, obs = _toy_problem([0.5, 1.0])
    intervals = cmc_intervals(est, prop, split, obs, 0.1, target_mask=np.zeros((1, 4), dtype=bool))
    assert np.isnan(intervals.q_hat) and not intervals.target_mask.any()

    with pytest.raises(ContractViolationError):
        cmc_intervals(est, prop, split, obs, 0.1, target_mask=split.cal_mask)


def test_exact_split_constant_odds():
    est, prop, split, obs = _toy_problem([0.5, 1.0, 1.5, 2.0, 0.1])
    oneshot = cmc_intervals(est, prop, split, obs, 0.3)
    exact = exact_split_intervals(est, prop, split, obs, 0.3)
    assert np.array_equal(np.asarray(exact.q_hat)[exact.target_mask], np.full(2, oneshot.q_hat))
    assert np.allclose(exact.upper[exact.target_mask], oneshot.upper[oneshot.target_mask])


def test_exact_split_dominance():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        d = 20
        obs_mask = rng.random((d, d)) < 0.6
        cal_mask = obs_mask & (rng.random((d, d)) < 0.5)
        split = MaskSplit(obs_mask & ~cal_mask, cal_mask, 0.5)
        P = rng.uniform(0.05, 0.95, (d, d))
        prop = PropensityModel(P, 'oracle')
        m_hat = rng.standard_normal((d, d))
        est = CompletionEstimate(m_hat, rng.uniform(0.5, 2, (d, d)), 1.0, np.zeros((d, d)))
        obs = ObservedMatrix(m_hat + rng.standard_normal((d, d)), obs_mask)

        oneshot = cmc_intervals(est, prop, split, obs, 0.1)
        exact = exact_split_intervals(est, prop, split, obs, 0.1)
        exact_q = np.asarray(exact.q_hat)[exact.target_mask]
        assert np.all(exact_q <= oneshot.q_hat)

        H = prop.odds()
        at_max = exact.target_mask & (H == H[exact.target_mask].max())
        assert np.all(np.asarray(exact.q_hat)[at_max] == oneshot.q_hat)


def _rank_one_instance(seed, d=8):
    rng = np.random.default_rng(seed)
    M = np.outer(rng.standard_normal(d), rng.standard_normal(d))
    truth = M + 0.1 * rng.standard_normal((d, d))
    mask = rng.random((d, d)) < 0.7
    return M, truth, ObservedMatrix(truth, mask)


def test_full_cmc_split_like_refit():
    kept_true = 0
    for seed in range(200):
        M, truth, obs = _rank_one_instance(seed)
        target = tuple(int(x) for x in np.argwhere(~obs.mask)[0])
        prop = PropensityModel(np.full(obs.dims, 0.7), 'homogeneous')

        def refit(augmented):
            return M, np.ones(M.shape)

        grid = [truth[target], truth[target] + 100.0]
        sets = full_cmc_intervals(obs, prop, refit, 0.1, grid=grid, targets=[target])
        kept_true += truth[target] in sets[0].kept
        assert truth[target] + 100.0 not in sets[0].kept
    assert kept_true >= 0.85 * 200


def test_full_cmc_zero_score_kept():
    M, truth, obs = _rank_one_instance(0)
    target = tuple(int(x) for x in np.argwhere(~obs.mask)[0])
    prop = PropensityModel(np.full(obs.dims, 0.7), 'homogeneous')
    sets = full_cmc_intervals(obs, prop, lambda aug: (M, np.ones(M.shape)), 0.1,
                              grid=[M[target]], targets=[target])
    assert np.array_equal(sets[0].kept, [M[target]])


def test_full_cmc_refit_failure():
    M, truth, obs = _rank_one_instance(1)
    targets = [tuple(int(x) for x in t) for t in np.argwhere(~obs.mask)[:2]]
    prop = PropensityModel(np.full(obs.dims, 0.7), 'homogeneous')

    def refit(augmented):
        value = augmented.values[targets[0]]
        if augmented.mask[targets[0]] and value > 0:
            raise ArithmeticError('diverged')
        return M, np.ones(M.shape)

    grid = np.array([-0.5, 0.0, 0.5])
    with pytest.warns(RefitFailureWarning):
        sets = full_cmc_intervals(obs, prop, refit, 0.1, grid=grid, targets=targets, n_jobs=2)
    assert np.array_equal(sets[0].undecided, [0.5])
    assert 0.5 not in sets[0].kept
    assert len(sets[1].undecided) == 0

    intervals = full_sets_to_intervals(sets, obs.dims)
    assert np.array_equal(np.argwhere(intervals.target_mask).tolist(), sorted(map(list, targets)))


def test_full_sets_to_intervals_empty_set():
    M, truth, obs = _rank_one_instance(2)
    target = tuple(int(x) for x in np.argwhere(~obs.mask)[0])
    prop = PropensityModel(np.full(obs.dims, 0.7), 'homogeneous')
    sets = full_cmc_intervals(obs, prop, lambda aug: (M, np.full(M.shape, 1e-6)), 0.1,
                              grid=[M[target] + 1e3], targets=[target])
    assert sets[0].is_empty and np.isnan(sets[0].lower)
    intervals = full_sets_to_intervals(sets, obs.dims)
    assert intervals.empty_mask[target] and intervals.lengths()[target] == 0


def test_default_grid():
    obs = ObservedMatrix(np.array([[1., 3.], [0., 0.]]), np.array([[True, True], [False, False]]))
    grid = default_grid(obs, 5)
    assert np.allclose(grid, [0, 1, 2, 3, 4])

    constant = ObservedMatrix(np.full((1, 2), 2.), np.array([[True, False]]))
    assert np.allclose(default_grid(constant, 3), [1.5, 2, 2.5])


def test_estimation_gap():
    cal_mask = np.array([[True, True, False]])
    H = np.array([[1., 1., 1.]])
    assert estimation_gap(H, H, cal_mask, (0, 2)).delta == 0
    assert estimation_gap(3 * H, H, cal_mask, (0, 2)).delta == pytest.approx(0)

    report = estimation_gap(np.array([[2., 1., 1.]]), H, cal_mask, (0, 2))
    assert report.delta == pytest.approx(1 / 6)
    assert report.delta <= report.delta_upper

    with pytest.raises(ContractViolationError):
        estimation_gap(H, H, cal_mask, (0, 0))


def test_estimation_gap_upper_bound():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        H_true, H_hat = rng.uniform(0.1, 5, (6, 6)), rng.uniform(0.1, 5, (6, 6))
        cal_mask = rng.random((6, 6)) < 0.5
        test_mask = ~cal_mask
        for test_point in map(tuple, np.argwhere(test_mask)):
            report = estimation_gap(H_hat, H_true, cal_mask, test_point)
            assert 0 <= report.delta <= report.delta_upper + 1e-12
            assert estimation_gap(2.5 * H_true, H_true, cal_mask, test_point).delta == pytest.approx(0, abs=1e-12)


def test_mean_estimation_gap():
    rng = np.random.default_rng(0)
    H_true, H_hat = rng.uniform(0.1, 5, (5, 5)), rng.uniform(0.1, 5, (5, 5))
    cal_mask = np.zeros((5, 5), dtype=bool)
    cal_mask[:2] = True
    test_mask = ~cal_mask

    report = mean_estimation_gap(H_hat, H_true, cal_mask, test_mask, RandomSource(0), n_samples=100)
    gaps = [estimation_gap(H_hat, H_true, cal_mask, tuple(t)) for t in np.argwhere(test_mask)]
    assert report.delta == pytest.approx(np.mean([g.delta for g in gaps]))
    assert report.delta_upper == pytest.approx(np.mean([g.delta_upper for g in gaps]))

    sampled = mean_estimation_gap(H_hat, H_true, cal_mask, test_mask, RandomSource(0), n_samples=5)
    assert 0 <= sampled.delta <= sampled.delta_upper
