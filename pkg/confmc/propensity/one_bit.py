from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from confmc.algorithms.base_functions import check_contract, project_nuclear_infty, NumericalFailureError
from confmc.matrices import MaskSplit
from .abstract_propensity import AbstractPropensityEstimator, PropensityModel, CLIP_EPS
from .logistic import split_loglik, split_loglik_gradient


@dataclass(frozen=True)
class Link:
    """Monotone link φ mapping the parameter matrix to observation logits, with its derivative"""
    name: str
    phi: Callable[[np.ndarray], np.ndarray]
    dphi: Callable[[np.ndarray], np.ndarray]


IDENTITY = Link('identity', lambda t: t, np.ones_like)


@dataclass(frozen=True)
class OneBitConfig:
    link: Link = field(default=IDENTITY)
    tau: float = 3.0  # bound on the entries of the parameter matrix
    k_star: int = 1  # rank bound entering the nuclear-norm radius
    step: float = 4.0
    iters: int = 200
    sweeps: int = 2  # alternating projections per step
    tol: float = 1e-8

    def __post_init__(self):
        check_contract(self.tau > 0, f"tau={self.tau} should be positive")
        check_contract(self.k_star >= 1, f"k_star={self.k_star} should be a positive integer")
        check_contract(self.step > 0 and self.iters >= 0 and self.sweeps >= 1, 'invalid solver parameters')
        grid = np.linspace(-self.tau, self.tau, 1001)
        check_contract(bool(np.all(np.diff(self.link.phi(grid)) > 0)),
                       f"link {self.link.name!r} should be strictly increasing on [-tau, tau]")

    def radius(self, dims: tuple[int, int]) -> float:
        """Nuclear-norm radius τ √(k* d1 d2)"""
        return self.tau * np.sqrt(self.k_star * dims[0] * dims[1])


def onebit_loglik(B: np.ndarray, train_mask: np.ndarray, q: float, link: Link = IDENTITY) -> float:
    """Σ_{train} log ψ(B_ij) + Σ_{not train} log(1 - ψ(B_ij)) with ψ(t) = q sigmoid(φ(t))"""
    train_mask = np.asarray(train_mask, dtype=bool)
    return split_loglik(link.phi(B), train_mask, q) + train_mask.sum() * np.log(q)


def onebit_gradient(B: np.ndarray, train_mask: np.ndarray, q: float, link: Link = IDENTITY) -> np.ndarray:
    return link.dphi(B) * split_loglik_gradient(link.phi(B), train_mask, q)


def fit_onebit(train_mask: np.ndarray, q: float, config: OneBitConfig = OneBitConfig(), clip_eps: float = CLIP_EPS) \
        -> tuple[np.ndarray, PropensityModel]:
    """Constrained maximum likelihood estimate of a bounded low-nuclear-norm matrix of observation logits

    Projected gradient ascent from B = 0 onto {‖B‖_* <= τ √(k* d1 d2), ‖B‖_∞ <= τ}.
    A step that does not increase the likelihood (or makes it non-finite) is halved, up to 30 times.
    The solver is deterministic.

    Returns
    -------
    A_hat:
        the final feasible iterate
    model:
        the clipped probabilities sigmoid(φ(A_hat))
    """
    check_contract(0 < q < 1, f"split probability q={q} should lie in (0, 1)")
    train_mask = np.asarray(train_mask, dtype=bool)
    radius = config.radius(train_mask.shape)

    B = np.zeros(train_mask.shape)
    loglik = onebit_loglik(B, train_mask, q, config.link)
    for iteration in range(config.iters):
        grad = onebit_gradient(B, train_mask, q, config.link)
        step, accepted, finite_seen = config.step, False, False
        for _ in range(30):
            B_new = project_nuclear_infty(B + step * grad, radius, config.tau, config.sweeps)
            loglik_new = onebit_loglik(B_new, train_mask, q, config.link)
            finite_seen |= bool(np.isfinite(loglik_new))
            if np.isfinite(loglik_new) and loglik_new >= loglik:
                accepted = True
                break
            step /= 2

        if not finite_seen:
            raise NumericalFailureError('one-bit likelihood stays non-finite after step halving',
                                        location=f"iteration {iteration}")
        if not accepted:
            break

        gain = loglik_new - loglik
        B, loglik = B_new, loglik_new
        if gain <= config.tol * abs(loglik):
            break

    P_hat = expit(config.link.phi(B))
    return B, PropensityModel(P_hat, 'one_bit', clip_eps)


class OneBitPropensity(AbstractPropensityEstimator):
    kind = 'one_bit'

    def __init__(self, config: OneBitConfig = OneBitConfig(), clip_eps: float = CLIP_EPS):
        self.config = config
        self.clip_eps = clip_eps

    def fit(self, split: MaskSplit) -> PropensityModel:
        return fit_onebit(split.train_mask, split.split_prob, self.config, self.clip_eps)[1]
