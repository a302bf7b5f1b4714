import numpy as np
from scipy.special import expit
from scipy.stats import norm, t as student_t

from confmc.algorithms.base_functions import check_contract, NumericalFailureError
from confmc.matrices import RandomSource
from .config import SyntheticConfig, FactorDist, NoiseModel, Missingness


MAX_FACTOR_DRAWS = 5


def _draw_entries(dist: FactorDist, shape: tuple[int, int], gen: np.random.Generator) -> np.ndarray:
    if dist.kind == 'gaussian':
        return gen.standard_normal(shape)
    return student_t.ppf(gen.random(shape), dist.df)


def _orthonormal_factor(dist: FactorDist, d: int, r: int, gen: np.random.Generator, name: str) -> np.ndarray:
    for _ in range(MAX_FACTOR_DRAWS):
        Q, R = np.linalg.qr(_draw_entries(dist, (d, r), gen))
        diag = np.abs(np.diag(R))
        if np.isfinite(R).all() and diag.min() > 1e-10 * diag.max():
            return Q
    raise NumericalFailureError(f"rank-deficient factor after {MAX_FACTOR_DRAWS} draws", location=name)


def gen_lowrank(cfg: SyntheticConfig, rng: RandomSource) -> np.ndarray:
    """M* = κ U* V*ᵀ with orthonormalized random factors and κ making the mean of |M*_ij| equal to its target"""
    gen = rng.generator()
    (d1, d2), r = cfg.dims, cfg.true_rank
    U = _orthonormal_factor(cfg.factor_dist, d1, r, gen, 'U*')
    V = _orthonormal_factor(cfg.factor_dist, d2, r, gen, 'V*')

    M = U @ V.T
    kappa = cfg.kappa_target_magnitude / np.abs(M).mean()
    return kappa * M


def gen_hetero_propensity(dims: tuple[int, int], k_star: int, rng: RandomSource) -> np.ndarray:
    """p_ij = sigmoid(Σ_l a_il b_lj) with a ~ Unif(0, 1) and b ~ Unif(-0.5, 0.5)"""
    check_contract(k_star >= 1, f"k_star={k_star} should be a positive integer")
    gen = rng.generator()
    a = gen.uniform(0, 1, (dims[0], k_star))
    b = gen.uniform(-0.5, 0.5, (k_star, dims[1]))
    return expit(a @ b)


def gen_propensity(missingness: Missingness, dims: tuple[int, int], rng: RandomSource) -> np.ndarray:
    if missingness.kind == 'homogeneous':
        return np.full(dims, float(missingness.p))
    return gen_hetero_propensity(dims, missingness.k_star, rng)


def noise_scale(noise: NoiseModel, missingness: Missingness, P: np.ndarray, rng: RandomSource) -> np.ndarray:
    """Entrywise scale of the noise: σ, the t scale, 1/(2 p_ij), or 1/(2 p'_ij) for an independent draw P'"""
    if noise.kind == 'gaussian':
        return np.full(P.shape, noise.sigma)
    if noise.kind == 'scaled_t':
        return np.full(P.shape, noise.scale)
    if noise.kind == 'adversarial_het':
        return 1 / (2 * P)
    return 1 / (2 * gen_propensity(missingness, P.shape, rng))


def gen_noise(cfg: SyntheticConfig, P: np.ndarray, rng: RandomSource) -> np.ndarray:
    """Independent noise entries following `cfg.noise`. Heterogeneous kinds scale by the propensities"""
    P = np.asarray(P, dtype=np.float64)
    check_contract(P.shape == cfg.dims, f"propensities of shape {P.shape} do not match dims {cfg.dims}")
    scale = noise_scale(cfg.noise, cfg.missingness, P, rng.child(0))

    gen = rng.generator()
    if cfg.noise.kind == 'scaled_t':
        return scale * student_t.ppf(gen.random(P.shape), cfg.noise.df)
    return scale * gen.standard_normal(P.shape)


def oracle_length(noise: NoiseModel, scale: np.ndarray, target_mask: np.ndarray, alpha: float) -> float:
    """Mean over targets of the gap between the (1-α/2) and α/2 quantiles of the noise law"""
    if not np.any(target_mask):
        return 0.0
    if noise.kind == 'scaled_t':
        gap = 2 * student_t.ppf(1 - alpha / 2, noise.df)
    else:
        gap = 2 * norm.ppf(1 - alpha / 2)
    return float(gap * np.asarray(scale)[target_mask].mean())
