from frozendict import frozendict

from .config import SyntheticConfig, ConfigError


SWEEP_RANKS = tuple(range(2, 41, 2))

_HOMOGENEOUS = frozendict({
    'dims': (500, 500), 'true_rank': 8, 'alpha': 0.1, 'trials': 100, 'ranks': SWEEP_RANKS,
    'propensity_fit': ('homogeneous',), 'method': ('cmc_oneshot', 'model_based'),
})
_HETEROGENEOUS = frozendict({
    'dims': (500, 500), 'true_rank': 8, 'alpha': 0.1, 'trials': 100, 'ranks': SWEEP_RANKS,
    'propensity_fit': ('one_bit', 'oracle'), 'method': ('cmc_oneshot',),
})

PRESETS = frozendict({
    'setting1': _HOMOGENEOUS | {
        'label': 'setting1', 'missingness': {'kind': 'homogeneous', 'p': 0.8},
        'factor_dist': 'gaussian', 'noise': {'kind': 'gaussian', 'sigma': 1.0}},
    'setting2': _HOMOGENEOUS | {
        'label': 'setting2', 'missingness': {'kind': 'homogeneous', 'p': 0.2},
        'factor_dist': 'gaussian', 'noise': {'kind': 'gaussian', 'sigma': 1.0}},
    'setting3': _HOMOGENEOUS | {
        'label': 'setting3', 'missingness': {'kind': 'homogeneous', 'p': 0.8},
        'factor_dist': 'gaussian', 'noise': {'kind': 'scaled_t', 'scale': 0.2, 'df': 1.2}},
    'setting4': _HOMOGENEOUS | {
        'label': 'setting4', 'missingness': {'kind': 'homogeneous', 'p': 0.8},
        'factor_dist': {'kind': 'student_t', 'df': 1.2}, 'noise': {'kind': 'gaussian', 'sigma': 1.0}},
    'het-k1': _HETEROGENEOUS | {
        'label': 'het-k1', 'missingness': {'kind': 'logistic_lowrank', 'k_star': 1},
        'factor_dist': 'gaussian', 'noise': {'kind': 'adversarial_het'}},
    'het-k1-gaussian': _HETEROGENEOUS | {
        'label': 'het-k1-gaussian', 'missingness': {'kind': 'logistic_lowrank', 'k_star': 1},
        'factor_dist': 'gaussian', 'noise': {'kind': 'gaussian', 'sigma': 1.0}},
    'het-k1-random': _HETEROGENEOUS | {
        'label': 'het-k1-random', 'missingness': {'kind': 'logistic_lowrank', 'k_star': 1},
        'factor_dist': 'gaussian', 'noise': {'kind': 'random_het'}},
    'het-k5': _HETEROGENEOUS | {
        'label': 'het-k5', 'missingness': {'kind': 'logistic_lowrank', 'k_star': 5},
        'factor_dist': 'gaussian', 'noise': {'kind': 'adversarial_het'}},
    'het-k5-gaussian': _HETEROGENEOUS | {
        'label': 'het-k5-gaussian', 'missingness': {'kind': 'logistic_lowrank', 'k_star': 5},
        'factor_dist': 'gaussian', 'noise': {'kind': 'gaussian', 'sigma': 1.0}},
    'het-k5-random': _HETEROGENEOUS | {
        'label': 'het-k5-random', 'missingness': {'kind': 'logistic_lowrank', 'k_star': 5},
        'factor_dist': 'gaussian', 'noise': {'kind': 'random_het'}},
    'desk': frozendict({
        'label': 'desk', 'dims': (80, 80), 'true_rank': 3, 'alpha': 0.1, 'trials': 200, 'ranks': (3,),
        'missingness': {'kind': 'homogeneous', 'p': 0.5}, 'factor_dist': 'gaussian',
        'noise': {'kind': 'gaussian', 'sigma': 1.0},
        'propensity_fit': ('homogeneous',), 'method': ('cmc_oneshot', 'model_based')}),
})


def load_preset(name: str) -> SyntheticConfig:
    if name not in PRESETS:
        raise ConfigError('preset', f"unknown preset {name!r}, available presets are {sorted(PRESETS)}")
    return SyntheticConfig.from_dict(dict(PRESETS[name]))
