from dataclasses import dataclass

import numpy as np

from confmc.algorithms.base_functions import check_contract
from .random_source import RandomSource


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    array = np.array(array, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class ObservedMatrix:
    """A real matrix of which only the entries flagged by `mask` are known

    Values at unobserved positions are stored as NaN and are never read.
    """
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values, mask = np.asarray(self.values), np.asarray(self.mask)
        check_contract(values.ndim == 2 and values.shape == mask.shape,
                       f"values of shape {values.shape} and mask of shape {mask.shape} should be equal 2D shapes")
        check_contract(values.shape[0] > 0 and values.shape[1] > 0, f"dims {values.shape} should be positive")
        mask = _frozen(mask, bool)
        object.__setattr__(self, 'mask', mask)
        object.__setattr__(self, 'values', _frozen(np.where(mask, values, np.nan), np.float64))

    @property
    def dims(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    @property
    def unobserved_mask(self) -> np.ndarray:
        return ~self.mask

    def zero_filled(self) -> np.ndarray:
        """Return the matrix with every unobserved entry replaced by 0"""
        return np.where(self.mask, self.values, 0.0)

    def restrict(self, mask: np.ndarray) -> 'ObservedMatrix':
        """Return the same matrix observed only on `self.mask & mask`"""
        return ObservedMatrix(self.values, self.mask & np.asarray(mask, dtype=bool))

    def augment(self, i: int, j: int, value: float) -> 'ObservedMatrix':
        """Return a copy where entry (i, j) is additionally observed and equals `value`"""
        values, mask = self.values.copy(), self.mask.copy()
        values[i, j], mask[i, j] = value, True
        return ObservedMatrix(values, mask)

    def require_observations(self, what: str = 'fitting'):
        check_contract(self.mask.any(), f"empty observation set: {what} needs at least one observed entry")


@dataclass(frozen=True, eq=False)
class MaskSplit:
    """Partition of the observed locations into a training and a calibration part"""
    train_mask: np.ndarray
    cal_mask: np.ndarray
    split_prob: float

    def __post_init__(self):
        train_mask, cal_mask = np.asarray(self.train_mask, dtype=bool), np.asarray(self.cal_mask, dtype=bool)
        check_contract(train_mask.shape == cal_mask.shape,
                       f"train mask of shape {train_mask.shape} and calibration mask of shape {cal_mask.shape} differ")
        check_contract(not (train_mask & cal_mask).any(), "train and calibration masks should be disjoint")
        check_contract(0 < self.split_prob < 1, f"split probability q={self.split_prob} should lie in (0, 1)")
        object.__setattr__(self, 'train_mask', _frozen(train_mask, bool))
        object.__setattr__(self, 'cal_mask', _frozen(cal_mask, bool))

    @property
    def observed_mask(self) -> np.ndarray:
        return self.train_mask | self.cal_mask

    @property
    def n_train(self) -> int:
        return int(self.train_mask.sum())

    @property
    def n_cal(self) -> int:
        return int(self.cal_mask.sum())


def observe(full: np.ndarray, P: np.ndarray, rng: RandomSource) -> ObservedMatrix:
    """Observe every entry (i, j) of `full` independently with probability P[i, j]"""
    full, P = np.asarray(full, dtype=np.float64), np.asarray(P, dtype=np.float64)
    check_contract(full.shape == P.shape, f"matrix of shape {full.shape} and probabilities of shape {P.shape} differ")
    check_contract(bool(np.all((0 <= P) & (P <= 1))), "observation probabilities should lie in [0, 1]")

    mask = rng.generator().random(full.shape) < P
    return ObservedMatrix(full, mask)


def split_observed(obs: ObservedMatrix, q: float, rng: RandomSource) -> MaskSplit:
    """Send every observed location to the training set with probability `q`, otherwise to the calibration set"""
    check_contract(0 < q < 1, f"split probability q={q} should lie in (0, 1)")
    to_train = rng.generator().random(obs.dims) < q
    return MaskSplit(obs.mask & to_train, obs.mask & ~to_train, q)
