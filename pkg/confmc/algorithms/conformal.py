import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from tqdm.autonotebook import tqdm

from confmc.algorithms.base_functions import check_contract
from confmc.matrices import ObservedMatrix, MaskSplit, IntervalMatrix, RandomSource
from confmc.completers import CompletionEstimate
from confmc.propensity import PropensityModel, odds


ScoreFunction = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
RefitFunction = Callable[[ObservedMatrix], tuple[np.ndarray, np.ndarray]]


class RefitFailureWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class WeightedEmpirical:
    """Discrete distribution Σ_k weights[k] δ_{atoms[k]}, with at most one +∞ atom"""
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms, weights = np.asarray(self.atoms, dtype=np.float64), np.asarray(self.weights, dtype=np.float64)
        check_contract(atoms.ndim == 1 and atoms.shape == weights.shape and len(atoms) > 0,
                       'atoms and weights should be non-empty vectors of equal length')
        check_contract(not np.isnan(atoms).any() and not np.isneginf(atoms).any(), 'atoms should be reals or +inf')
        check_contract(int(np.isposinf(atoms).sum()) <= 1, 'at most one atom may be +inf')
        check_contract(bool(np.all(weights >= 0)), 'weights should be non-negative')
        check_contract(abs(weights.sum() - 1) <= 1e-10, f"weights sum to {weights.sum()} instead of 1")
        object.__setattr__(self, 'atoms', atoms)
        object.__setattr__(self, 'weights', weights)


@dataclass(frozen=True)
class GapReport:
    delta: float
    delta_upper: float


@dataclass(frozen=True, eq=False)
class FullConformalSet:
    """Grid values kept in the full conformal prediction set of one target entry"""
    target: tuple[int, int]
    kept: np.ndarray
    undecided: np.ndarray

    @property
    def is_empty(self) -> bool:
        return len(self.kept) == 0

    @property
    def lower(self) -> float:
        return float(self.kept.min()) if len(self.kept) else np.nan

    @property
    def upper(self) -> float:
        return float(self.kept.max()) if len(self.kept) else np.nan


def sorted_thresholds(sorted_atoms: np.ndarray, cum_mass: np.ndarray, total_mass, level: float) -> np.ndarray:
    """For every total mass D, the smallest sorted atom whose cumulative mass reaches level·D (+∞ if none does)

    The cumulative masses are unnormalized, so the result is non-decreasing in D.
    """
    targets = level * np.asarray(total_mass, dtype=np.float64)
    idx = np.searchsorted(cum_mass, targets, side='left')
    padded = np.append(sorted_atoms, np.inf)
    return padded[np.minimum(idx, len(sorted_atoms))]


def weighted_quantile(dist: WeightedEmpirical, level: float) -> float:
    """Smallest atom t with dist({atoms <= t}) >= level, or +∞ if no finite atom suffices"""
    check_contract(0 < level < 1, f"quantile level {level} should lie in (0, 1)")
    order = np.argsort(dist.atoms, kind='stable')
    return float(sorted_thresholds(dist.atoms[order], np.cumsum(dist.weights[order]), 1.0, level))


def absolute_residual_score(values: np.ndarray, m_hat: np.ndarray, s_hat: np.ndarray) -> np.ndarray:
    return np.abs(values - m_hat) / s_hat


def residuals(
        cal: ObservedMatrix, m_hat: np.ndarray, s_hat: np.ndarray, score: Optional[ScoreFunction] = None
) -> np.ndarray:
    """Conformity scores R_ij = |M_ij - M̂_ij| / ŝ_ij on the observed entries of `cal`, NaN elsewhere

    Any other score can be plugged in with `score(values, m_hat, s_hat)`.
    """
    score = score if score is not None else absolute_residual_score
    s_hat = np.asarray(s_hat, dtype=np.float64)
    check_contract(bool(np.all(s_hat[cal.mask] > 0)), 'local scales should be positive on the calibration set')

    scores = np.full(cal.dims, np.nan)
    scores[cal.mask] = score(cal.values[cal.mask], np.asarray(m_hat)[cal.mask], s_hat[cal.mask])
    return scores


def oneshot_weights(H: np.ndarray, cal_mask: np.ndarray, test_mask: np.ndarray) -> tuple[np.ndarray, float]:
    """Calibration weights ĥ_ij / (Σ_cal ĥ + max_test ĥ) in row-major order, and the weight of the test point"""
    H = np.asarray(H, dtype=np.float64)
    check_contract(bool(np.any(test_mask)), 'test mask should not be empty')
    check_contract(bool(np.all(H > 0)), 'odds should be positive')

    h_cal, h_max = H[cal_mask], H[test_mask].max()
    denominator = h_cal.sum() + h_max
    return h_cal / denominator, float(h_max / denominator)


def oracle_weights(P_true: np.ndarray, cal_mask: np.ndarray, test_mask: np.ndarray) -> tuple[np.ndarray, float]:
    """Same as `oneshot_weights` with the odds of the true observation probabilities"""
    return oneshot_weights(odds(PropensityModel(P_true, 'oracle')), cal_mask, test_mask)


def _calibration(scores: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    order = np.argsort(scores, kind='stable')
    cum_h = np.cumsum(h[order])
    return scores[order], cum_h, float(cum_h[-1]) if len(cum_h) else 0.0


def _target_mask(split: MaskSplit, target_mask: Optional[np.ndarray]) -> np.ndarray:
    if target_mask is None:
        return ~split.observed_mask
    target_mask = np.asarray(target_mask, dtype=bool)
    check_contract(not (target_mask & split.observed_mask).any(), 'targets should be unobserved entries')
    return target_mask


def cmc_intervals(
        est: CompletionEstimate, prop: PropensityModel, split: MaskSplit, cal_values: ObservedMatrix, alpha: float,
        target_mask: Optional[np.ndarray] = None, score: Optional[ScoreFunction] = None,
) -> IntervalMatrix:
    """Conformalized intervals M̂_ij ± q̂ ŝ_ij with one threshold q̂ shared by every target

    q̂ is the (1-α) quantile of the calibration scores weighted by their odds,
    the test point being given the largest odds over the targets (mass at +∞).
    Targets default to every unobserved entry. No targets give an empty result with q̂ = NaN.
    """
    check_contract(0 < alpha < 1, f"alpha={alpha} should lie in (0, 1)")
    target_mask = _target_mask(split, target_mask)
    if not target_mask.any():
        return IntervalMatrix(np.full(split.cal_mask.shape, np.nan), np.full(split.cal_mask.shape, np.nan),
                              target_mask, np.nan)

    H = prop.odds()
    scores = residuals(cal_values.restrict(split.cal_mask), est.m_hat, est.s_hat, score)
    sorted_scores, cum_h, sum_cal = _calibration(scores[split.cal_mask], H[split.cal_mask])
    q_hat = float(sorted_thresholds(sorted_scores, cum_h, sum_cal + H[target_mask].max(), 1 - alpha))
    return IntervalMatrix.from_center(est.m_hat, q_hat * est.s_hat, target_mask, q_hat)


def exact_split_intervals(
        est: CompletionEstimate, prop: PropensityModel, split: MaskSplit, cal_values: ObservedMatrix, alpha: float,
        target_mask: Optional[np.ndarray] = None, score: Optional[ScoreFunction] = None,
) -> IntervalMatrix:
    """Conformalized intervals with a threshold q̂(i,j) per target, the test point carrying its own odds ĥ_ij

    Never wider than `cmc_intervals` on the same input.
    """
    check_contract(0 < alpha < 1, f"alpha={alpha} should lie in (0, 1)")
    target_mask = _target_mask(split, target_mask)

    H = prop.odds()
    scores = residuals(cal_values.restrict(split.cal_mask), est.m_hat, est.s_hat, score)
    sorted_scores, cum_h, sum_cal = _calibration(scores[split.cal_mask], H[split.cal_mask])

    q_hat = np.full(target_mask.shape, np.nan)
    q_hat[target_mask] = sorted_thresholds(sorted_scores, cum_h, sum_cal + H[target_mask], 1 - alpha)
    return IntervalMatrix.from_center(est.m_hat, q_hat * est.s_hat, target_mask, q_hat)


def default_grid(obs: ObservedMatrix, size: int = 200) -> np.ndarray:
    """`size` equispaced values over [min - range/2, max + range/2] of the observed values"""
    obs.require_observations('grid construction')
    observed = obs.values[obs.mask]
    low, high = observed.min(), observed.max()
    spread = (high - low) if high > low else 1.0
    return np.linspace(low - 0.5 * spread, high + 0.5 * spread, size)


def _full_conformal_point(
        obs: ObservedMatrix, H: np.ndarray, refit: RefitFunction, target: tuple[int, int], value: float,
        level: float, score: ScoreFunction
) -> Optional[bool]:
    """Whether `value` is kept at `target`, None when the refit fails"""
    augmented = obs.augment(*target, value)
    try:
        m_hat, s_hat = refit(augmented)
        scores = residuals(augmented, m_hat, s_hat, score)
    except (ArithmeticError, ValueError):
        return None

    target_score = scores[target]
    sorted_scores, cum_h, sum_obs = _calibration(scores[obs.mask], H[obs.mask])
    threshold = sorted_thresholds(sorted_scores, cum_h, sum_obs + H[target], level)
    return bool(target_score <= threshold)


def full_cmc_intervals(
        obs: ObservedMatrix, prop: PropensityModel, refit: RefitFunction, alpha: float,
        grid: Optional[Sequence[float]] = None, targets: Optional[Sequence[tuple[int, int]]] = None,
        score: Optional[ScoreFunction] = None, n_jobs: int = 1, use_tqdm: bool = False,
) -> list[FullConformalSet]:
    """Full conformalized matrix completion over a grid of hypothesized values

    For every target and every grid value m: the target is added to the observations with value m,
    `refit` is run on the augmented matrix, and m is kept iff the target score does not exceed
    the (1-α) quantile of Σ_{S} ĥ_ij δ_{R_ij} + ĥ_target δ_{+∞} (normalized over S and the target).

    Parameters
    ----------
    obs:
        all observed entries S
    prop:
        fitted propensity model providing the odds ĥ
    refit:
        maps an augmented ObservedMatrix to (m_hat, s_hat). Called concurrently when `n_jobs` != 1
    alpha:
        miscoverage level
    grid:
        hypothesized values. Defaults to `default_grid(obs)`
    targets:
        unobserved entries to build sets for. Defaults to every unobserved entry
    n_jobs:
        number of threads evaluating (target, grid value) pairs
    use_tqdm:
        show a progress bar

    Returns
    -------
    one FullConformalSet per target, in the order of `targets`.
    A grid value whose refit failed is reported as undecided and excluded from the set
    """
    check_contract(0 < alpha < 1, f"alpha={alpha} should lie in (0, 1)")
    grid = default_grid(obs) if grid is None else np.asarray(grid, dtype=np.float64)
    check_contract(len(grid) > 0, 'grid should not be empty')
    if targets is None:
        targets = list(zip(*np.nonzero(obs.unobserved_mask)))
    targets = [(int(i), int(j)) for i, j in targets]
    check_contract(all(not obs.mask[t] for t in targets), 'targets should be unobserved entries')
    score = score if score is not None else absolute_residual_score

    H = prop.odds()
    pairs = [(t, m) for t in targets for m in grid]
    pairs_iterator = tqdm(pairs, disable=not use_tqdm, desc='Full conformal grid')
    decisions = Parallel(n_jobs=n_jobs, backend='threading')(
        delayed(_full_conformal_point)(obs, H, refit, t, m, 1 - alpha, score) for t, m in pairs_iterator)

    n_failed = sum(d is None for d in decisions)
    if n_failed:
        warnings.warn(RefitFailureWarning(f"{n_failed} of {len(pairs)} refits failed; their grid values are undecided"))

    decisions = np.array([np.nan if d is None else float(d) for d in decisions]).reshape(len(targets), len(grid))
    return [FullConformalSet(t, grid[row == 1], grid[np.isnan(row)]) for t, row in zip(targets, decisions)]


def full_sets_to_intervals(sets: Sequence[FullConformalSet], dims: tuple[int, int]) -> IntervalMatrix:
    """Report every full conformal set by its hull [min, max]. Empty sets get NaN bounds"""
    lower, upper = np.full(dims, np.nan), np.full(dims, np.nan)
    target_mask = np.zeros(dims, dtype=bool)
    for conf_set in sets:
        target_mask[conf_set.target] = True
        lower[conf_set.target], upper[conf_set.target] = conf_set.lower, conf_set.upper
    return IntervalMatrix(lower, upper, target_mask, np.nan)


def estimation_gap(
        H_hat: np.ndarray, H_true: np.ndarray, cal_mask: np.ndarray, test_point: tuple[int, int]
) -> GapReport:
    """Total variation between the estimated and true normalized odds over the calibration set and the test point

    `delta_upper` = Σ |ĥ - h| / Σ_cal ĥ always bounds `delta` from above.
    """
    H_hat, H_true = np.asarray(H_hat, dtype=np.float64), np.asarray(H_true, dtype=np.float64)
    check_contract(not cal_mask[test_point], 'the test point should not belong to the calibration set')
    h_hat = np.append(H_hat[cal_mask], H_hat[test_point])
    h_true = np.append(H_true[cal_mask], H_true[test_point])

    delta = 0.5 * np.abs(h_hat / h_hat.sum() - h_true / h_true.sum()).sum()
    cal_mass = h_hat[:-1].sum()
    delta_upper = np.abs(h_hat - h_true).sum() / cal_mass if cal_mass > 0 else np.inf
    return GapReport(float(min(delta, 1.0)), float(delta_upper))


def mean_estimation_gap(
        H_hat: np.ndarray, H_true: np.ndarray, cal_mask: np.ndarray, test_mask: np.ndarray,
        rng: RandomSource, n_samples: int = 200,
) -> GapReport:
    """Average `estimation_gap` over (at most `n_samples`) test points drawn uniformly without replacement"""
    H_hat, H_true = np.asarray(H_hat, dtype=np.float64), np.asarray(H_true, dtype=np.float64)
    test_idx = np.flatnonzero(test_mask)
    check_contract(len(test_idx) > 0, 'test mask should not be empty')
    if len(test_idx) > n_samples:
        test_idx = np.sort(rng.generator().choice(test_idx, n_samples, replace=False))

    hat_cal, true_cal = H_hat[cal_mask], H_true[cal_mask]
    hat_test, true_test = H_hat.ravel()[test_idx], H_true.ravel()[test_idx]
    hat_total, true_total = hat_cal.sum() + hat_test, true_cal.sum() + true_test

    deltas = np.abs(hat_cal[None, :] / hat_total[:, None] - true_cal[None, :] / true_total[:, None]).sum(1)
    deltas = 0.5 * (deltas + np.abs(hat_test / hat_total - true_test / true_total))
    abs_diff_cal = np.abs(hat_cal - true_cal).sum()
    cal_mass = hat_cal.sum()
    uppers = (abs_diff_cal + np.abs(hat_test - true_test)) / cal_mass if cal_mass > 0 else np.full(len(test_idx), np.inf)
    return GapReport(float(np.minimum(deltas, 1.0).mean()), float(uppers.mean()))
