from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from confmc.algorithms.base_functions import check_contract
from confmc.matrices import IntervalMatrix


@dataclass(frozen=True)
class TrialReport:
    avg_cov: float
    avg_length: float
    n_unobserved: int
    q_hat: float
    seed: int
    delta: Optional[float] = None

    def __post_init__(self):
        check_contract(0 <= self.avg_cov <= 1, f"average coverage {self.avg_cov} should lie in [0, 1]")
        check_contract(self.avg_length >= 0, f"average length {self.avg_length} should be non-negative")


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    se: float
    quantiles: dict[float, float]

    def to_dict(self) -> dict:
        return {'mean': self.mean, 'se': self.se, 'quantiles': {str(k): v for k, v in self.quantiles.items()}}


@dataclass(frozen=True)
class Summary:
    n_trials: int
    avg_cov: MetricSummary
    avg_length: MetricSummary
    frac_infinite: float

    def to_dict(self) -> dict:
        return {'n_trials': self.n_trials, 'avg_cov': self.avg_cov.to_dict(),
                'avg_length': self.avg_length.to_dict(), 'frac_infinite': self.frac_infinite}


SUMMARY_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def _target_mask(intervals: IntervalMatrix, target_mask: Optional[np.ndarray]) -> np.ndarray:
    if target_mask is None:
        return intervals.target_mask
    target_mask = np.asarray(target_mask, dtype=bool)
    check_contract(not (target_mask & ~intervals.target_mask).any(), 'intervals are undefined on some targets')
    return target_mask


def avg_cov(intervals: IntervalMatrix, truth: np.ndarray, target_mask: Optional[np.ndarray] = None) -> float:
    """Fraction of targets whose true value lies in its closed interval. 1 when there are no targets"""
    target_mask = _target_mask(intervals, target_mask)
    n_targets = int(target_mask.sum())
    if n_targets == 0:
        return 1.0
    return float(intervals.contains(truth)[target_mask].sum() / n_targets)


def avg_length(intervals: IntervalMatrix, target_mask: Optional[np.ndarray] = None) -> float:
    """Mean interval length over targets, +inf if any of them is unbounded"""
    target_mask = _target_mask(intervals, target_mask)
    if not target_mask.any():
        return 0.0
    lengths = intervals.lengths()[target_mask]
    if np.isinf(lengths).any():
        return np.inf
    return float(lengths.mean())


def _summarize(values: np.ndarray) -> MetricSummary:
    if np.isinf(values).any():
        quantiles = {q: float(np.quantile(values, q, method='lower')) for q in SUMMARY_QUANTILES}
        return MetricSummary(np.inf, np.nan, quantiles)

    se = float(np.std(values, ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
    return MetricSummary(float(np.mean(values)), se, {q: float(np.quantile(values, q)) for q in SUMMARY_QUANTILES})


def aggregate(reports: Sequence[TrialReport]) -> Summary:
    """Mean, standard error and quantiles of coverage and length over trials"""
    check_contract(len(reports) > 0, 'cannot aggregate an empty list of reports')
    covs = np.sort([r.avg_cov for r in reports])
    lengths = np.sort([r.avg_length for r in reports])
    return Summary(len(reports), _summarize(covs), _summarize(lengths), float(np.isinf(lengths).mean()))
