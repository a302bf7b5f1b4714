from typing import Optional, Union

import numpy as np

from confmc.algorithms.base_functions import check_contract, thin_svd, NumericalFailureError
from confmc.matrices import ObservedMatrix
from .abstract_completer import AbstractCompleter, FactorModel


def soft_threshold_svd(A: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
    """Return the singular-value soft-thresholding of `A` at level `lam` and the nuclear norm of the result"""
    U, sigma, V = thin_svd(A, min(A.shape))
    sigma = np.maximum(sigma - lam, 0)
    kept = sigma > 0
    return (U[:, kept] * sigma[kept]) @ V[:, kept].T, float(sigma.sum())


def prox_nuclear_fit(
        train: ObservedMatrix, lam: float, iters: int = 200, tol: float = 1e-6, return_history: bool = False
) -> Union[np.ndarray, tuple[np.ndarray, list[float]]]:
    """Soft-impute: minimize ½ Σ_{observed} (Z_ij - M_ij)² + λ‖Z‖_* by proximal gradient steps of size 1

    Every step fills the unobserved entries with the current iterate and soft-thresholds the singular values.
    Stops when the relative change of the iterate falls below `tol`.
    If `return_history` is set, the objective values of the successive iterates are returned as well.
    """
    check_contract(lam > 0, f"lambda={lam} should be positive")
    mask, values = train.mask, train.zero_filled()

    Z = np.zeros(train.dims)
    history = []
    for iteration in range(iters):
        Z_new, nuc = soft_threshold_svd(np.where(mask, values, Z), lam)
        if not np.isfinite(Z_new).all():
            raise NumericalFailureError('non-finite soft-impute iterate', location=f"iteration {iteration}")

        residuals = np.where(mask, Z_new - values, 0.0)
        history.append(float(0.5 * (residuals ** 2).sum() + lam * nuc))

        change = np.linalg.norm(Z_new - Z)
        Z = Z_new
        if change <= tol * max(np.linalg.norm(Z), 1.0):
            break

    if return_history:
        return Z, history
    return Z


def default_lambda(train: ObservedMatrix) -> float:
    """5% of the leading singular value of the zero-filled matrix rescaled by the observed fraction"""
    observed_fraction = train.n_observed / train.mask.size
    _, sigma, _ = thin_svd(train.zero_filled() / observed_fraction, 1)
    return max(0.05 * float(sigma[0]), 1e-12)


class NuclearNormCompleter(AbstractCompleter):
    """Convex relaxation base completer. Local scales come from the rank-`rank` truncation of its output"""
    def __init__(self, rank: int, lam: Optional[float] = None, iters: int = 200, tol: float = 1e-6):
        self.rank = rank
        self.lam = lam
        self.iters = iters
        self.tol = tol

    def fit(self, train: ObservedMatrix) -> tuple[np.ndarray, FactorModel]:
        train.require_observations('nuclear-norm completion')
        lam = self.lam if self.lam is not None else default_lambda(train)
        Z = prox_nuclear_fit(train, lam, self.iters, self.tol)

        U, sigma, V = thin_svd(Z, self.rank)
        root = np.sqrt(sigma)
        return Z, FactorModel(U * root, V * root)
