from dataclasses import dataclass
from typing import Union

import numpy as np

from confmc.algorithms.base_functions import check_contract


@dataclass(frozen=True, eq=False)
class IntervalMatrix:
    """Closed intervals [lower, upper] produced for the entries flagged by `target_mask`

    Outside of `target_mask` both bounds are NaN. Inside, an interval is either
    a proper closed interval (possibly (-inf, +inf) when the threshold is infinite)
    or an empty set, encoded by NaN bounds (only full conformal prediction produces those).
    """
    lower: np.ndarray
    upper: np.ndarray
    target_mask: np.ndarray
    q_hat: Union[float, np.ndarray]

    def __post_init__(self):
        target_mask = np.asarray(self.target_mask, dtype=bool)
        lower = np.where(target_mask, np.asarray(self.lower, dtype=np.float64), np.nan)
        upper = np.where(target_mask, np.asarray(self.upper, dtype=np.float64), np.nan)
        check_contract(lower.shape == upper.shape == target_mask.shape,
                       'bounds and target mask should share the same shape')
        defined = target_mask & ~np.isnan(lower) & ~np.isnan(upper)
        check_contract(bool(np.all(lower[defined] <= upper[defined])), 'every lower bound should not exceed its upper bound')

        for name, array in [('lower', lower), ('upper', upper), ('target_mask', target_mask)]:
            array.flags.writeable = False
            object.__setattr__(self, name, array)

    @classmethod
    def from_center(
            cls, center: np.ndarray, half_width: np.ndarray, target_mask: np.ndarray, q_hat: Union[float, np.ndarray]
    ) -> 'IntervalMatrix':
        """Build intervals center ± half_width. An infinite half width gives (-inf, +inf)"""
        center, half_width = np.asarray(center, dtype=np.float64), np.asarray(half_width, dtype=np.float64)
        infinite = np.isinf(half_width)
        with np.errstate(invalid='ignore'):
            lower = np.where(infinite, -np.inf, center - half_width)
            upper = np.where(infinite, np.inf, center + half_width)
        return cls(lower, upper, target_mask, q_hat)

    @property
    def infinite_mask(self) -> np.ndarray:
        """Targets whose interval is unbounded"""
        return self.target_mask & (np.isinf(self.lower) | np.isinf(self.upper))

    @property
    def empty_mask(self) -> np.ndarray:
        """Targets whose prediction set is empty"""
        return self.target_mask & (np.isnan(self.lower) | np.isnan(self.upper))

    @property
    def is_infinite(self) -> bool:
        return bool(self.infinite_mask.any())

    def lengths(self) -> np.ndarray:
        """Interval lengths on the targets (0 for empty sets), NaN elsewhere"""
        with np.errstate(invalid='ignore'):
            lengths = self.upper - self.lower
        lengths[self.empty_mask] = 0.0
        return lengths

    def contains(self, truth: np.ndarray) -> np.ndarray:
        """Boolean matrix: whether `truth` lies in the closed interval, False outside of the targets"""
        truth = np.asarray(truth, dtype=np.float64)
        with np.errstate(invalid='ignore'):
            return self.target_mask & (self.lower <= truth) & (truth <= self.upper)
