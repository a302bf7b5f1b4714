from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from confmc.algorithms.base_functions import check_contract
from confmc.matrices import MaskSplit


CLIP_EPS = 1e-3
PropensityKind = Literal['homogeneous', 'logistic_rowcol', 'one_bit', 'oracle']
PROPENSITY_KINDS = ('homogeneous', 'logistic_rowcol', 'one_bit', 'oracle')


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class PropensityModel:
    """Entrywise observation probabilities, clipped into [clip_eps, 1 - clip_eps]"""
    p_hat: np.ndarray
    kind: PropensityKind
    clip_eps: float = CLIP_EPS

    def __post_init__(self):
        check_contract(self.kind in PROPENSITY_KINDS, f"unknown propensity kind {self.kind!r}")
        check_contract(0 < self.clip_eps < 0.5, f"clip_eps={self.clip_eps} should lie in (0, 0.5)")
        p_hat = np.asarray(self.p_hat, dtype=np.float64)
        check_contract(p_hat.ndim == 2, f"probabilities should form a matrix, got shape {p_hat.shape}")
        check_contract(not np.isnan(p_hat).any(), 'probabilities should not contain NaN')

        p_hat = np.clip(p_hat, self.clip_eps, 1 - self.clip_eps)
        p_hat.flags.writeable = False
        object.__setattr__(self, 'p_hat', p_hat)

    @property
    def dims(self) -> tuple[int, int]:
        return self.p_hat.shape

    def odds(self) -> np.ndarray:
        return odds(self)


def odds(model: PropensityModel) -> np.ndarray:
    """Odds ratios h_ij = (1 - p_ij) / p_ij of the clipped probabilities"""
    return (1 - model.p_hat) / model.p_hat


class AbstractPropensityEstimator:
    """Estimates the observation probabilities from the training mask of a split"""
    kind: PropensityKind
    clip_eps: float = CLIP_EPS

    def fit(self, split: MaskSplit) -> PropensityModel:
        raise NotImplementedError


def fit_homogeneous(split: MaskSplit, dims: Optional[tuple[int, int]] = None, clip_eps: float = CLIP_EPS) \
        -> PropensityModel:
    """Constant probability |S_tr| / (d1 d2 q)"""
    d1, d2 = dims if dims is not None else split.train_mask.shape
    check_contract((d1, d2) == split.train_mask.shape, f"dims {(d1, d2)} do not match the split")
    check_contract(split.split_prob > 0, f"split probability {split.split_prob} should be positive")

    p = split.n_train / (d1 * d2 * split.split_prob)
    return PropensityModel(np.full((d1, d2), p), 'homogeneous', clip_eps)


class HomogeneousPropensity(AbstractPropensityEstimator):
    kind = 'homogeneous'

    def __init__(self, clip_eps: float = CLIP_EPS):
        self.clip_eps = clip_eps

    def fit(self, split: MaskSplit) -> PropensityModel:
        return fit_homogeneous(split, clip_eps=self.clip_eps)


class OraclePropensity(AbstractPropensityEstimator):
    """Returns the true observation probabilities whatever the data"""
    kind = 'oracle'

    def __init__(self, P_true: np.ndarray, clip_eps: float = CLIP_EPS):
        self.P_true = np.asarray(P_true, dtype=np.float64)
        self.clip_eps = clip_eps

    def fit(self, split: MaskSplit) -> PropensityModel:
        check_contract(self.P_true.shape == split.train_mask.shape,
                       f"true probabilities of shape {self.P_true.shape} do not match the split")
        return PropensityModel(self.P_true, 'oracle', self.clip_eps)
