from typing import Optional

import numpy as np

from confmc.algorithms.base_functions import check_contract, thin_svd, NumericalFailureError
from confmc.matrices import ObservedMatrix, RandomSource
from .abstract_completer import AbstractCompleter, FactorModel


MIN_DEFAULT_RIDGE = 1e-12


def spectral_init(train: ObservedMatrix, r: int, rng: Optional[RandomSource] = None) \
        -> tuple[np.ndarray, np.ndarray, float]:
    """Initial factors from the rank-`r` SVD of the zero-filled matrix divided by the observed fraction

    Returns U = U_r Σ^{1/2}, V = V_r Σ^{1/2} and the leading singular value.
    Singular directions with a null singular value are replaced with small random draws from `rng`.
    """
    observed_fraction = train.n_observed / train.mask.size
    U, sigma, V = thin_svd(train.zero_filled() / observed_fraction, r)
    root = np.sqrt(sigma)
    U, V = U * root, V * root

    null_dirs = sigma <= 1e-12 * max(sigma[0], 1.0)
    if null_dirs.any():
        gen = (rng if rng is not None else RandomSource(0)).generator()
        k = int(null_dirs.sum())
        U[:, null_dirs] = 1e-3 * gen.standard_normal((U.shape[0], k))
        V[:, null_dirs] = 1e-3 * gen.standard_normal((V.shape[0], k))
    return U, V, float(sigma[0])


def als_objective(train: ObservedMatrix, U: np.ndarray, V: np.ndarray, ridge: float) -> float:
    residuals = np.where(train.mask, train.zero_filled() - U @ V.T, 0.0)
    return float((residuals ** 2).sum() + ridge * ((U ** 2).sum() + (V ** 2).sum()))


def _solve_factor(mask: np.ndarray, values: np.ndarray, other: np.ndarray, ridge: float, axis_name: str) \
        -> np.ndarray:
    """Solve the ridge least-squares problem of every row of one factor, the `other` factor being fixed"""
    n, r = mask.shape[0], other.shape[1]
    outer = (other[:, :, None] * other[:, None, :]).reshape(other.shape[0], r * r)
    gram = (mask.astype(np.float64) @ outer).reshape(n, r, r) + ridge * np.eye(r)
    rhs = values @ other

    if ridge == 0:
        deficient = np.flatnonzero(np.linalg.matrix_rank(gram) < r)
        if len(deficient):
            idx = int(deficient[0])
            raise NumericalFailureError(
                f"singular normal equations: {int(mask[idx].sum())} observed entries for rank {r} and no ridge",
                location=f"{axis_name} {idx}")

    try:
        solution = np.linalg.solve(gram, rhs[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as e:
        raise NumericalFailureError(f"normal equations could not be solved ({e})", location=axis_name)

    not_finite = np.flatnonzero(~np.isfinite(solution).all(1))
    if len(not_finite):
        raise NumericalFailureError('non-finite factor row', location=f"{axis_name} {int(not_finite[0])}")
    return solution


def als_fit(
        train: ObservedMatrix, r: int, iters: int = 50, ridge: Optional[float] = None,
        rng: Optional[RandomSource] = None, tol: float = 1e-8
) -> FactorModel:
    """Alternating ridge least squares over the observed entries of `train`

    Parameters
    ----------
    train:
        the observed training matrix
    r:
        hypothesized rank
    iters:
        maximal number of sweeps (one sweep updates U, then V)
    ridge:
        penalty on ‖U‖_F² + ‖V‖_F². Defaults to 1e-6 σ₁² of the spectral initializer
    rng:
        source of the random directions used when the initializer is rank deficient
    tol:
        stop as soon as the relative decrease of the objective drops below `tol`

    Returns
    -------
    FactorModel with the objective value before the first and after every sweep
    """
    train.require_observations('ALS')
    d1, d2 = train.dims
    check_contract(isinstance(r, (int, np.integer)) and 1 <= r <= min(d1, d2),
                   f"rank r={r} is out of range [1, {min(d1, d2)}]")
    check_contract(iters >= 0, f"number of sweeps {iters} should be non-negative")

    U, V, sigma1 = spectral_init(train, r, rng)
    if ridge is None:
        ridge = max(1e-6 * sigma1 ** 2, MIN_DEFAULT_RIDGE)
    check_contract(ridge >= 0, f"ridge={ridge} should be non-negative")

    mask, values = train.mask, train.zero_filled()
    history = [als_objective(train, U, V, ridge)]
    for _ in range(iters):
        U = _solve_factor(mask, values, V, ridge, 'row')
        V = _solve_factor(mask.T, values.T, U, ridge, 'column')
        history.append(als_objective(train, U, V, ridge))

        prev, cur = history[-2], history[-1]
        if abs(prev - cur) <= tol * prev:
            break

    return FactorModel(U, V, tuple(history))


class ALSCompleter(AbstractCompleter):
    def __init__(
            self, rank: int, iters: int = 50, ridge: Optional[float] = None,
            rng: Optional[RandomSource] = None, tol: float = 1e-8
    ):
        self.rank = rank
        self.iters = iters
        self.ridge = ridge
        self.rng = rng
        self.tol = tol

    def fit(self, train: ObservedMatrix) -> tuple[np.ndarray, FactorModel]:
        factors = als_fit(train, self.rank, self.iters, self.ridge, self.rng, self.tol)
        return factors.m_hat, factors
