from dataclasses import dataclass, field, fields, replace, asdict
from typing import Literal, Optional

from confmc.propensity import CLIP_EPS


@dataclass
class ConfigError(ValueError):
    key: str
    message: str

    def __str__(self):
        return f"Invalid config value for `{self.key}`: {self.message}"


METHODS = ('cmc_oneshot', 'cmc_exact', 'cmc_full', 'model_based')
PROPENSITY_FITS = ('homogeneous', 'logistic_rowcol', 'one_bit', 'oracle')


def _require(condition: bool, key: str, message: str):
    if not condition:
        raise ConfigError(key, message)


@dataclass(frozen=True)
class FactorDist:
    """Law of the i.i.d. entries of the random matrices orthonormalized into the factors"""
    kind: Literal['gaussian', 'student_t'] = 'gaussian'
    df: Optional[float] = None

    def __post_init__(self):
        _require(self.kind in ('gaussian', 'student_t'), 'factor_dist.kind', f"unknown factor law {self.kind!r}")
        _require(self.kind != 'student_t' or (self.df is not None and self.df > 0),
                 'factor_dist.df', 'student_t factors need positive degrees of freedom `df`')


@dataclass(frozen=True)
class NoiseModel:
    """Additive noise: gaussian(sigma), scaled_t(scale, df), or heterogeneous gaussian with σ_ij = 1/(2 p_ij)

    `adversarial_het` uses the true observation probabilities, `random_het` an independent draw of them.
    """
    kind: Literal['gaussian', 'scaled_t', 'adversarial_het', 'random_het'] = 'gaussian'
    sigma: float = 1.0
    scale: float = 1.0
    df: Optional[float] = None

    def __post_init__(self):
        _require(self.kind in ('gaussian', 'scaled_t', 'adversarial_het', 'random_het'),
                 'noise.kind', f"unknown noise {self.kind!r}")
        _require(self.sigma >= 0 and self.scale >= 0, 'noise', 'noise levels should be non-negative')
        _require(self.kind != 'scaled_t' or (self.df is not None and self.df > 0),
                 'noise.df', 'scaled_t noise needs positive degrees of freedom `df`')


@dataclass(frozen=True)
class Missingness:
    """Observation model: constant probability `p`, or logit(P) = A B with A (d1 x k_star), B (k_star x d2)"""
    kind: Literal['homogeneous', 'logistic_lowrank'] = 'homogeneous'
    p: Optional[float] = None
    k_star: Optional[int] = None

    def __post_init__(self):
        _require(self.kind in ('homogeneous', 'logistic_lowrank'),
                 'missingness.kind', f"unknown missingness {self.kind!r}")
        if self.kind == 'homogeneous':
            _require(self.p is not None and 0 <= self.p <= 1, 'missingness.p', f"p={self.p} should lie in [0, 1]")
        else:
            _require(isinstance(self.k_star, int) and self.k_star >= 1,
                     'missingness.k_star', f"k_star={self.k_star} should be a positive integer")


@dataclass(frozen=True)
class BaseModel:
    """Base completer: `als`, or `cvx` (nuclear-norm relaxation, λ defaulting to 5% of σ₁)"""
    kind: Literal['als', 'cvx'] = 'als'
    lam: Optional[float] = None
    iters: Optional[int] = None
    ridge: Optional[float] = None

    def __post_init__(self):
        _require(self.kind in ('als', 'cvx'), 'base.kind', f"unknown base completer {self.kind!r}")
        _require(self.lam is None or self.lam > 0, 'base.lambda', f"lambda={self.lam} should be positive")
        _require(self.iters is None or self.iters >= 0, 'base.iters', f"iters={self.iters} should be non-negative")


SECTION_ALIASES = {'lambda': 'lam'}


def _parse_section(cls, raw, key: str):
    if isinstance(raw, cls):
        return raw
    if isinstance(raw, str):
        raw = {'kind': raw}
    _require(isinstance(raw, dict), key, f"expected an object or a string, got {raw!r}")

    known = {f.name for f in fields(cls)}
    kwargs = {}
    for k, v in raw.items():
        name = SECTION_ALIASES.get(k, k)
        _require(name in known, f"{key}.{k}", 'unknown key')
        kwargs[name] = v
    return cls(**kwargs)


def _as_tuple(raw, key: str, allowed: Optional[tuple] = None) -> tuple:
    values = tuple(raw) if isinstance(raw, (list, tuple)) else (raw,)
    _require(len(values) > 0, key, 'should not be empty')
    if allowed is not None:
        for v in values:
            _require(v in allowed, key, f"{v!r} is not one of {allowed}")
    return values


@dataclass(frozen=True)
class SyntheticConfig:
    """Everything defining a simulation: data generation, fitting and the methods to compare"""
    label: str = 'custom'
    dims: tuple[int, int] = (500, 500)
    true_rank: int = 8
    kappa_target_magnitude: float = 2.0
    factor_dist: FactorDist = field(default_factory=FactorDist)
    noise: NoiseModel = field(default_factory=NoiseModel)
    missingness: Missingness = field(default_factory=lambda: Missingness('homogeneous', p=0.8))
    alpha: float = 0.1
    trials: int = 100
    ranks: tuple[int, ...] = (8,)
    base: BaseModel = field(default_factory=BaseModel)
    propensity_fit: tuple[str, ...] = ('homogeneous',)
    method: tuple[str, ...] = ('cmc_oneshot', 'model_based')
    seed: int = 0
    split_prob: float = 0.8
    local_scale: bool = True
    clip_eps: float = CLIP_EPS
    one_bit_tau: float = 3.0
    one_bit_k_star: Optional[int] = None  # defaults to the generative k_star, 1 under homogeneous missingness
    full_targets: int = 20
    full_grid_size: int = 50
    full_refit_iters: int = 10

    def __post_init__(self):
        d1, d2 = self.dims
        _require(d1 >= 1 and d2 >= 1, 'dims', f"dims {self.dims} should be positive")
        _require(1 <= self.true_rank <= min(d1, d2), 'true_rank', f"true rank {self.true_rank} out of range")
        _require(self.kappa_target_magnitude > 0, 'kappa_target_magnitude', 'should be positive')
        _require(0 < self.alpha < 1, 'alpha', f"alpha={self.alpha} should lie in (0, 1)")
        _require(self.trials >= 1, 'trials', f"trials={self.trials} should be positive")
        for r in self.ranks:
            _require(isinstance(r, int) and 1 <= r <= min(d1, d2), 'ranks', f"rank {r} out of range")
        _require(0 < self.split_prob < 1, 'split_prob', f"split_prob={self.split_prob} should lie in (0, 1)")
        _require(0 <= self.seed < 2**64, 'seed', f"seed={self.seed} should be a 64-bit unsigned integer")
        _require(0 < self.clip_eps < 0.5, 'clip_eps', f"clip_eps={self.clip_eps} should lie in (0, 0.5)")
        _require(self.one_bit_tau > 0, 'one_bit_tau', 'should be positive')
        _require(self.full_targets >= 1 and self.full_grid_size >= 1 and self.full_refit_iters >= 1,
                 'full_targets', 'full conformal budgets should be positive')
        for v in self.method:
            _require(v in METHODS, 'method', f"{v!r} is not one of {METHODS}")
        for v in self.propensity_fit:
            _require(v in PROPENSITY_FITS, 'propensity_fit', f"{v!r} is not one of {PROPENSITY_FITS}")

    @property
    def onebit_k_star(self) -> int:
        if self.one_bit_k_star is not None:
            return self.one_bit_k_star
        return self.missingness.k_star if self.missingness.kind == 'logistic_lowrank' else 1

    @classmethod
    def from_dict(cls, raw: dict) -> 'SyntheticConfig':
        """Parse a JSON-like dict. Unknown keys raise ConfigError"""
        _require(isinstance(raw, dict), '<root>', 'config should be a JSON object')
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            _require(key in known, key, 'unknown key')
            kwargs[key] = value

        sections = {'factor_dist': FactorDist, 'noise': NoiseModel, 'missingness': Missingness, 'base': BaseModel}
        for key, section_cls in sections.items():
            if key in kwargs:
                kwargs[key] = _parse_section(section_cls, kwargs[key], key)

        if 'dims' in kwargs:
            dims = kwargs['dims']
            dims = (dims, dims) if isinstance(dims, int) else tuple(dims)
            _require(len(dims) == 2 and all(isinstance(d, int) for d in dims), 'dims', 'expected [d1, d2]')
            kwargs['dims'] = dims
        if 'ranks' in kwargs:
            kwargs['ranks'] = _as_tuple(kwargs['ranks'], 'ranks')
        if 'method' in kwargs:
            kwargs['method'] = _as_tuple(kwargs['method'], 'method', METHODS)
        if 'propensity_fit' in kwargs:
            kwargs['propensity_fit'] = _as_tuple(kwargs['propensity_fit'], 'propensity_fit', PROPENSITY_FITS)

        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ConfigError('<root>', str(e))

    def to_dict(self) -> dict:
        raw = asdict(self)
        raw['base']['lambda'] = raw['base'].pop('lam')
        raw['dims'], raw['ranks'] = list(self.dims), list(self.ranks)
        raw['method'], raw['propensity_fit'] = list(self.method), list(self.propensity_fit)
        return raw

    def with_overrides(self, **changes) -> 'SyntheticConfig':
        return replace(self, **changes)

    def desk(self) -> 'SyntheticConfig':
        """The same experiment shrunk to d = 80, r* = 3 and 200 trials"""
        ranks = tuple(sorted({min(r, 80) for r in self.ranks})) if self.ranks != (self.true_rank,) else (3,)
        return replace(self, dims=(80, 80), true_rank=3, trials=200, ranks=ranks)
