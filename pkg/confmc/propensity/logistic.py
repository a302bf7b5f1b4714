import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from confmc.algorithms.base_functions import check_contract
from confmc.matrices import MaskSplit
from .abstract_propensity import AbstractPropensityEstimator, PropensityModel, ConvergenceWarning, CLIP_EPS


@dataclass(frozen=True, eq=False)
class LogisticRowColParams:
    """Row and column effects of the model logit(p_ij) = u_i + v_j, with Σ u_i = 0"""
    u: np.ndarray
    v: np.ndarray
    converged: bool = True
    grad_norm: float = 0.0

    @property
    def logits(self) -> np.ndarray:
        return self.u[:, None] + self.v[None, :]


def _log1mq(q: float) -> float:
    return np.log1p(-q) if q < 1 else -np.inf


def split_loglik(x: np.ndarray, train_mask: np.ndarray, q: float) -> float:
    """Σ_all -log(1 + e^{-x}) + Σ_{not train} log(1 - q + e^{-x}), the train-indicator likelihood up to a constant"""
    not_train = ~np.asarray(train_mask, dtype=bool)
    total = -np.logaddexp(0, -x).sum()
    total += np.logaddexp(_log1mq(q), -x[not_train]).sum()
    return float(total)


def split_loglik_gradient(x: np.ndarray, train_mask: np.ndarray, q: float) -> np.ndarray:
    """Entrywise derivative of `split_loglik` with respect to x"""
    not_train = ~np.asarray(train_mask, dtype=bool)
    return expit(-x) - not_train * expit(-x - _log1mq(q))


def logistic_rowcol_loglik(u: np.ndarray, v: np.ndarray, train_mask: np.ndarray, q: float) -> float:
    return split_loglik(u[:, None] + v[None, :], train_mask, q)


def logistic_rowcol_gradient(u: np.ndarray, v: np.ndarray, train_mask: np.ndarray, q: float) \
        -> tuple[np.ndarray, np.ndarray]:
    g = split_loglik_gradient(u[:, None] + v[None, :], train_mask, q)
    return g.sum(1), g.sum(0)


def fit_logistic_rowcol(
        train_mask: np.ndarray, q: float, iters: int = 1000, tol: float = 1e-6, clip_eps: float = CLIP_EPS
) -> tuple[LogisticRowColParams, PropensityModel]:
    """Maximum likelihood estimate of row and column effects of the observation logits

    Preconditioned gradient ascent (rows scaled by 4/d2, columns by 4/d1) with Armijo backtracking.
    u is re-centred after every step, moving its mean into v, which leaves the likelihood unchanged.

    Parameters
    ----------
    train_mask:
        training locations. Every location is observed with probability p_ij and then sent to training w.p. `q`
    q:
        split probability, in (0, 1)
    iters:
        maximal number of ascent steps
    tol:
        stop when the ∞-norm of the gradient falls below `tol`
    clip_eps:
        clipping level of the output probabilities

    Returns
    -------
    params:
        fitted (u, v), with the convergence status and the final gradient norm
    model:
        the clipped probabilities sigmoid(u_i + v_j)
    """
    check_contract(0 < q < 1, f"split probability q={q} should lie in (0, 1)")
    train_mask = np.asarray(train_mask, dtype=bool)
    d1, d2 = train_mask.shape
    u, v = np.zeros(d1), np.zeros(d2)
    scale_u, scale_v = 4 / d2, 4 / d1

    loglik = logistic_rowcol_loglik(u, v, train_mask, q)
    grad_u, grad_v = logistic_rowcol_gradient(u, v, train_mask, q)
    grad_norm = max(np.abs(grad_u).max(), np.abs(grad_v).max())
    step = 1.0
    for _ in range(iters):
        if grad_norm <= tol:
            break

        slope = scale_u * grad_u @ grad_u + scale_v * grad_v @ grad_v
        step = min(2 * step, 1.0)
        while step > 1e-12:
            u_new, v_new = u + step * scale_u * grad_u, v + step * scale_v * grad_v
            loglik_new = logistic_rowcol_loglik(u_new, v_new, train_mask, q)
            if loglik_new >= loglik + 1e-4 * step * slope:
                break
            step /= 2
        else:
            break

        shift = u_new.mean()
        u, v, loglik = u_new - shift, v_new + shift, loglik_new
        grad_u, grad_v = logistic_rowcol_gradient(u, v, train_mask, q)
        grad_norm = max(np.abs(grad_u).max(), np.abs(grad_v).max())

    converged = bool(grad_norm <= tol)
    if not converged:
        warnings.warn(ConvergenceWarning(
            f"Logistic propensity fit stopped with gradient norm {grad_norm:.3e} > tol={tol}"))

    params = LogisticRowColParams(u, v, converged, float(grad_norm))
    return params, PropensityModel(expit(params.logits), 'logistic_rowcol', clip_eps)


class LogisticRowColPropensity(AbstractPropensityEstimator):
    kind = 'logistic_rowcol'

    def __init__(self, iters: int = 1000, tol: float = 1e-6, clip_eps: float = CLIP_EPS):
        self.iters = iters
        self.tol = tol
        self.clip_eps = clip_eps

    def fit(self, split: MaskSplit) -> PropensityModel:
        return fit_logistic_rowcol(split.train_mask, split.split_prob, self.iters, self.tol, self.clip_eps)[1]
