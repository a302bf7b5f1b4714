import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from confmc.algorithms.base_functions import check_contract, thin_svd
from confmc.matrices import ObservedMatrix, IntervalMatrix


SCALE_FLOOR = 1e-12


class DegenerateScaleWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class FactorModel:
    """Low-rank estimate M̂ = U Vᵀ"""
    U: np.ndarray
    V: np.ndarray
    objective_history: tuple[float, ...] = field(default=())

    def __post_init__(self):
        check_contract(self.U.ndim == 2 and self.V.ndim == 2 and self.U.shape[1] == self.V.shape[1],
                       f"factors of shapes {self.U.shape} and {self.V.shape} do not share a rank")
        check_contract(self.U.shape[1] >= 1, 'rank of a factor model should be at least 1')
        check_contract(bool(np.isfinite(self.U).all() and np.isfinite(self.V).all()), 'factors should be finite')

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    @property
    def m_hat(self) -> np.ndarray:
        return self.U @ self.V.T


@dataclass(frozen=True, eq=False)
class CompletionEstimate:
    """Point estimate M̂ together with the local scales ŝ used to normalize residuals

    When the local scale is switched off, `s_hat` is all ones and `theta2_hat` all zeros.
    """
    m_hat: np.ndarray
    s_hat: np.ndarray
    sigma2_hat: float
    theta2_hat: np.ndarray
    factors: Optional[FactorModel] = None


def estimate_noise(train: ObservedMatrix, m_hat: np.ndarray) -> float:
    """Mean squared residual of `m_hat` over the observed entries of `train`"""
    train.require_observations('noise estimation')
    residuals = train.values[train.mask] - np.asarray(m_hat)[train.mask]
    return float(np.dot(residuals, residuals) / residuals.size)


def estimate_local_scale(factors: FactorModel, sigma2_hat: float, p_hat_scalar: float) \
        -> tuple[np.ndarray, np.ndarray]:
    """Compute entrywise variances θ̂² and scales ŝ of a low-rank estimate

    Parameters
    ----------
    factors:
        the fitted low-rank model. Its product is re-decomposed at the same rank,
        and the row norms are taken from the singular vectors
    sigma2_hat:
        estimated noise variance
    p_hat_scalar:
        estimated (single) observation probability, in (0, 1]

    Returns
    -------
    theta2_hat:
        θ̂²_ij = σ̂²/p̂ · (‖Û_i‖² + ‖V̂_j‖²)
    s_hat:
        ŝ_ij = (θ̂²_ij + σ̂²)^{1/2}, floored at 1e-12
    """
    check_contract(0 < p_hat_scalar <= 1, f"observation probability p={p_hat_scalar} should lie in (0, 1]")
    check_contract(sigma2_hat >= 0, f"noise variance {sigma2_hat} should be non-negative")

    U, _, V = thin_svd(factors.m_hat, factors.rank)
    row_norms2, col_norms2 = (U ** 2).sum(1), (V ** 2).sum(1)
    theta2_hat = sigma2_hat / p_hat_scalar * (row_norms2[:, None] + col_norms2[None, :])
    s_hat = np.sqrt(theta2_hat + sigma2_hat)

    degenerate = s_hat < SCALE_FLOOR
    if degenerate.any():
        warnings.warn(DegenerateScaleWarning(
            f"{int(degenerate.sum())} local scales are below {SCALE_FLOOR} and are floored to it"))
        s_hat = np.maximum(s_hat, SCALE_FLOOR)
    return theta2_hat, s_hat


def model_based_intervals(
        m_hat: np.ndarray, s_hat: np.ndarray, alpha: float, target_mask: Optional[np.ndarray] = None
) -> IntervalMatrix:
    """Gaussian intervals M̂_ij ± z_{1-α/2} ŝ_ij (the baseline that ignores conformal calibration)"""
    check_contract(0 < alpha < 1, f"alpha={alpha} should lie in (0, 1)")
    m_hat = np.asarray(m_hat, dtype=np.float64)
    target_mask = np.ones(m_hat.shape, dtype=bool) if target_mask is None else target_mask

    z = float(norm.ppf(1 - alpha / 2))
    return IntervalMatrix.from_center(m_hat, z * np.asarray(s_hat, dtype=np.float64), target_mask, z)


def standardized_scores(truth: np.ndarray, m_hat: np.ndarray, s_hat: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Return (M̂_ij - M_ij) / ŝ_ij over `mask`, row-major. Standard normal if the model-based intervals are right"""
    mask = np.asarray(mask, dtype=bool)
    return (np.asarray(m_hat)[mask] - np.asarray(truth)[mask]) / np.asarray(s_hat)[mask]


class AbstractCompleter:
    """Base completer: fits a low-rank estimate of a partially observed matrix"""
    rank: int

    def fit(self, train: ObservedMatrix) -> tuple[np.ndarray, FactorModel]:
        """Return the completed matrix M̂ and a rank-`self.rank` factorization used for local scales"""
        raise NotImplementedError

    def complete(self, train: ObservedMatrix) -> np.ndarray:
        return self.fit(train)[0]

    def estimate(
            self, train: ObservedMatrix, p_hat_scalar: Optional[float] = None, local_scale: bool = True
    ) -> CompletionEstimate:
        """Fit on `train` and attach the noise and local-scale estimates

        `p_hat_scalar` defaults to the observed fraction of `train`.
        """
        m_hat, factors = self.fit(train)
        sigma2_hat = estimate_noise(train, m_hat)
        if not local_scale:
            ones = np.ones(m_hat.shape)
            return CompletionEstimate(m_hat, ones, sigma2_hat, np.zeros(m_hat.shape), factors)

        if p_hat_scalar is None:
            p_hat_scalar = train.n_observed / train.mask.size
        theta2_hat, s_hat = estimate_local_scale(factors, sigma2_hat, p_hat_scalar)
        return CompletionEstimate(m_hat, s_hat, sigma2_hat, theta2_hat, factors)
