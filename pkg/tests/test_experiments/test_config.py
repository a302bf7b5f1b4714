import pytest

from confmc.experiments.config import SyntheticConfig, ConfigError, FactorDist, NoiseModel, Missingness, BaseModel


def test_defaults():
    cfg = SyntheticConfig()
    assert cfg.dims == (500, 500) and cfg.true_rank == 8
    assert cfg.missingness == Missingness('homogeneous', p=0.8)
    assert cfg.method == ('cmc_oneshot', 'model_based')
    assert cfg.onebit_k_star == 1


def test_from_dict():
    cfg = SyntheticConfig.from_dict({
        'label': 'toy', 'dims': 40, 'true_rank': 2, 'ranks': 3, 'method': 'cmc_exact',
        'propensity_fit': ['homogeneous', 'logistic_rowcol'], 'factor_dist': 'gaussian',
        'noise': {'kind': 'scaled_t', 'scale': 0.2, 'df': 1.2},
        'missingness': {'kind': 'logistic_lowrank', 'k_star': 5},
        'base': {'kind': 'cvx', 'lambda': 0.3},
    })
    assert cfg.dims == (40, 40) and cfg.ranks == (3,)
    assert cfg.method == ('cmc_exact',)
    assert cfg.propensity_fit == ('homogeneous', 'logistic_rowcol')
    assert cfg.factor_dist == FactorDist('gaussian')
    assert cfg.noise == NoiseModel('scaled_t', scale=0.2, df=1.2)
    assert cfg.base == BaseModel('cvx', lam=0.3)
    assert cfg.onebit_k_star == 5
    assert SyntheticConfig.from_dict({'dims': [30, 20], 'ranks': [1, 2], 'true_rank': 2}).dims == (30, 20)


def test_to_dict_round_trip():
    cfg = SyntheticConfig.from_dict({'dims': [30, 20], 'true_rank': 2, 'ranks': [1, 2], 'base': {'kind': 'cvx'}})
    raw = cfg.to_dict()
    assert raw['dims'] == [30, 20] and raw['base']['lambda'] is None and 'lam' not in raw['base']
    assert SyntheticConfig.from_dict(raw) == cfg


@pytest.mark.parametrize('raw, key', [
    ({'unknown': 1}, 'unknown'),
    ({'noise': {'kind': 'gaussian', 'sd': 1}}, 'noise.sd'),
    ({'noise': 'cauchy'}, 'noise.kind'),
    ({'noise': 'scaled_t'}, 'noise.df'),
    ({'factor_dist': 'student_t'}, 'factor_dist.df'),
    ({'missingness': {'kind': 'homogeneous', 'p': 1.5}}, 'missingness.p'),
    ({'missingness': {'kind': 'logistic_lowrank'}}, 'missingness.k_star'),
    ({'base': {'kind': 'als', 'lambda': -1}}, 'base.lambda'),
    ({'alpha': 1.0}, 'alpha'),
    ({'trials': 0}, 'trials'),
    ({'dims': [10, 10], 'ranks': [11]}, 'ranks'),
    ({'dims': [10, 10, 10]}, 'dims'),
    ({'method': ['cmc_oneshot', 'bayes']}, 'method'),
    ({'propensity_fit': []}, 'propensity_fit'),
    ({'split_prob': 1}, 'split_prob'),
    ({'seed': -1}, 'seed'),
])
def test_invalid(raw, key):
    with pytest.raises(ConfigError) as excinfo:
        SyntheticConfig.from_dict(raw)
    assert excinfo.value.key == key
    assert key in str(excinfo.value)


def test_not_an_object():
    with pytest.raises(ConfigError):
        SyntheticConfig.from_dict([1, 2])


def test_desk():
    cfg = SyntheticConfig(ranks=(2, 8, 40)).desk()
    assert cfg.dims == (80, 80) and cfg.true_rank == 3 and cfg.trials == 200
    assert cfg.ranks == (2, 8, 40)
    assert SyntheticConfig().desk().ranks == (3,)


def test_with_overrides():
    cfg = SyntheticConfig().with_overrides(seed=7, alpha=0.2)
    assert cfg.seed == 7 and cfg.alpha == 0.2
    with pytest.raises(ConfigError):
        SyntheticConfig().with_overrides(alpha=2)
