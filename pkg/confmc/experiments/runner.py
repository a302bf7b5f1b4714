import logging
import time
from dataclasses import dataclass, asdict, fields, replace
from typing import Callable, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits
from tqdm.autonotebook import tqdm

from confmc.algorithms.base_functions import NumericalFailureError
from confmc.algorithms.conformal import (
    cmc_intervals, exact_split_intervals, full_cmc_intervals, full_sets_to_intervals, default_grid,
    mean_estimation_gap,
)
from confmc.algorithms.metrics import TrialReport, avg_cov, avg_length, aggregate
from confmc.completers import AbstractCompleter, ALSCompleter, NuclearNormCompleter, model_based_intervals
from confmc.matrices import ObservedMatrix, MaskSplit, IntervalMatrix, RandomSource, observe, split_observed
from confmc.propensity import (
    AbstractPropensityEstimator, PropensityModel, HomogeneousPropensity, OraclePropensity,
    LogisticRowColPropensity, OneBitPropensity, OneBitConfig, odds,
)
from .config import SyntheticConfig
from .synthetic import gen_lowrank, gen_noise, gen_propensity, noise_scale, oracle_length


_logger = logging.getLogger(__name__)

# sub-streams of a trial
LOWRANK_STREAM, PROPENSITY_STREAM, NOISE_STREAM, OBSERVE_STREAM, SPLIT_STREAM, EXTRA_STREAM = range(6)

RECORD_COLUMNS = ('setting', 'rank', 'method', 'propensity', 'trial', 'seed', 'avg_cov', 'avg_length', 'q_hat',
                  'delta', 'oracle_length', 'n_unobserved')


@dataclass(frozen=True, eq=False)
class TrialData:
    """Everything a trial draws before fitting: the full matrix, the propensities, the observations and the split"""
    M_star: np.ndarray
    E: np.ndarray
    P: np.ndarray
    noise_scale: Optional[np.ndarray]
    obs: ObservedMatrix
    split: MaskSplit

    @property
    def truth(self) -> np.ndarray:
        return self.M_star + self.E


@dataclass(frozen=True)
class TrialRecord:
    setting: str
    rank: int
    method: str
    propensity: str
    trial: int
    seed: int
    avg_cov: float
    avg_length: float
    q_hat: float
    delta: Optional[float]
    oracle_length: Optional[float]
    n_unobserved: int
    runtime_ms: Optional[float] = None

    @property
    def report(self) -> TrialReport:
        return TrialReport(self.avg_cov, self.avg_length, self.n_unobserved, self.q_hat, self.seed, self.delta)


def trial_source(cfg: SyntheticConfig, trial: int) -> RandomSource:
    return RandomSource(cfg.seed, stream_id=trial)


def prepare_trial(cfg: SyntheticConfig, rng: RandomSource) -> TrialData:
    """Draw M*, P, E, the observations and the split, each from its own sub-stream of `rng`"""
    M_star = gen_lowrank(cfg, rng.child(LOWRANK_STREAM))
    P = gen_propensity(cfg.missingness, cfg.dims, rng.child(PROPENSITY_STREAM))
    noise_rng = rng.child(NOISE_STREAM)
    E = gen_noise(cfg, P, noise_rng)
    scale = noise_scale(cfg.noise, cfg.missingness, P, noise_rng.child(0))
    return _observe_and_split(cfg, M_star, E, P, scale, rng)


def prepare_masked_trial(cfg: SyntheticConfig, M: np.ndarray, P: np.ndarray, rng: RandomSource) -> TrialData:
    """Trial on a fully known matrix: only the observation mask and the split are random"""
    return _observe_and_split(cfg, M, np.zeros(M.shape), P, None, rng)


def _observe_and_split(cfg, M_star, E, P, scale, rng: RandomSource) -> TrialData:
    obs = observe(M_star + E, P, rng.child(OBSERVE_STREAM))
    obs.require_observations('a trial')
    split = split_observed(obs, cfg.split_prob, rng.child(SPLIT_STREAM))
    return TrialData(M_star, E, P, scale, obs, split)


def make_completer(cfg: SyntheticConfig, rank: int, rng: Optional[RandomSource] = None) -> AbstractCompleter:
    if cfg.base.kind == 'als':
        iters = cfg.base.iters if cfg.base.iters is not None else 50
        return ALSCompleter(rank, iters=iters, ridge=cfg.base.ridge, rng=rng)
    iters = cfg.base.iters if cfg.base.iters is not None else 200
    return NuclearNormCompleter(rank, lam=cfg.base.lam, iters=iters)


def make_propensity_estimator(kind: str, cfg: SyntheticConfig, P_true: Optional[np.ndarray] = None) \
        -> AbstractPropensityEstimator:
    if kind == 'homogeneous':
        return HomogeneousPropensity(cfg.clip_eps)
    if kind == 'logistic_rowcol':
        return LogisticRowColPropensity(clip_eps=cfg.clip_eps)
    if kind == 'one_bit':
        return OneBitPropensity(OneBitConfig(tau=cfg.one_bit_tau, k_star=cfg.onebit_k_star), cfg.clip_eps)
    assert kind == 'oracle', f"Unknown propensity estimator {kind}"
    assert P_true is not None, 'Oracle propensity needs the true observation probabilities'
    return OraclePropensity(P_true, cfg.clip_eps)


def training_probability(split: MaskSplit) -> float:
    """p̂ = |S_tr| / (d1 d2 q), capped at 1"""
    return min(split.n_train / (split.train_mask.size * split.split_prob), 1.0)


def _full_cmc(cfg, rank, data: TrialData, prop: PropensityModel, rng: RandomSource) -> IntervalMatrix:
    unobserved = np.flatnonzero(data.obs.unobserved_mask)
    n_targets = min(cfg.full_targets, len(unobserved))
    chosen = np.sort(rng.generator().choice(unobserved, n_targets, replace=False))
    targets = [divmod(int(k), cfg.dims[1]) for k in chosen]

    refit_cfg = cfg.with_overrides(base=replace(cfg.base, iters=cfg.full_refit_iters))
    refit_completer = make_completer(refit_cfg, rank, rng.child(0))
    p_hat = min(data.obs.n_observed / data.obs.mask.size, 1.0)

    def refit(augmented: ObservedMatrix) -> tuple[np.ndarray, np.ndarray]:
        est = refit_completer.estimate(augmented, p_hat, cfg.local_scale)
        return est.m_hat, est.s_hat

    grid = default_grid(data.obs, cfg.full_grid_size)
    sets = full_cmc_intervals(data.obs, prop, refit, cfg.alpha, grid, targets)
    return full_sets_to_intervals(sets, cfg.dims)


def run_trial_methods(
        cfg: SyntheticConfig, rank: int, rng: RandomSource, data: Optional[TrialData] = None,
        trial: int = 0, timings: bool = False,
) -> list[TrialRecord]:
    """Fit the base completer once and produce one record per (method, propensity fit)

    The model-based baseline ignores the propensities and is reported once, with propensity 'none'.
    """
    data = data if data is not None else prepare_trial(cfg, rng)
    train = data.obs.restrict(data.split.train_mask)
    completer = make_completer(cfg, rank, rng.child(EXTRA_STREAM).child(0))
    est = completer.estimate(train, training_probability(data.split), cfg.local_scale)

    target = data.obs.unobserved_mask
    truth = data.truth
    H_true = odds(PropensityModel(data.P, 'oracle', cfg.clip_eps))
    oracle_len = oracle_length(cfg.noise, data.noise_scale, target, cfg.alpha) \
        if data.noise_scale is not None else None

    def record(method: str, propensity: str, intervals: IntervalMatrix, q_hat: float, delta, start: float):
        runtime = 1000 * (time.perf_counter() - start) if timings else None
        return TrialRecord(
            cfg.label, rank, method, propensity, trial, cfg.seed,
            avg_cov(intervals, truth), avg_length(intervals), q_hat, delta, oracle_len,
            int(intervals.target_mask.sum()), runtime)

    records = []
    if 'model_based' in cfg.method:
        start = time.perf_counter()
        intervals = model_based_intervals(est.m_hat, est.s_hat, cfg.alpha, target)
        records.append(record('model_based', 'none', intervals, float(intervals.q_hat), None, start))

    conformal_methods = [m for m in cfg.method if m != 'model_based']
    for k, kind in enumerate(cfg.propensity_fit):
        if not conformal_methods:
            break
        prop = make_propensity_estimator(kind, cfg, data.P).fit(data.split)
        delta = None
        if target.any():
            delta = mean_estimation_gap(prop.odds(), H_true, data.split.cal_mask, target,
                                        rng.child(EXTRA_STREAM).child(1 + k)).delta

        for method in conformal_methods:
            start = time.perf_counter()
            if method == 'cmc_oneshot':
                intervals = cmc_intervals(est, prop, data.split, data.obs, cfg.alpha)
                q_hat = float(intervals.q_hat)
            elif method == 'cmc_exact':
                intervals = exact_split_intervals(est, prop, data.split, data.obs, cfg.alpha)
                q_hats = np.asarray(intervals.q_hat)[intervals.target_mask]
                q_hat = float(q_hats.mean()) if len(q_hats) else np.nan
            else:
                intervals = _full_cmc(cfg, rank, data, prop, rng.child(EXTRA_STREAM).child(100 + k))
                q_hat = np.nan
            records.append(record(method, kind, intervals, q_hat, delta, start))
    return records


def run_trial(cfg: SyntheticConfig, r_hyp: int, rng: RandomSource, method: Optional[str] = None,
              propensity: Optional[str] = None) -> TrialReport:
    """Run one trial and return the report of `method` (the first configured method by default)"""
    method = method if method is not None else cfg.method[0]
    if method == 'model_based':
        cfg = cfg.with_overrides(method=(method,))
    else:
        propensity = propensity if propensity is not None else cfg.propensity_fit[0]
        cfg = cfg.with_overrides(method=(method,), propensity_fit=(propensity,))
    records = run_trial_methods(cfg, r_hyp, rng)
    return records[0].report


def _run_trial_all_ranks(cfg: SyntheticConfig, trial: int, timings: bool,
                         prepare: Callable[[SyntheticConfig, RandomSource], TrialData]) -> list[TrialRecord]:
    rng = trial_source(cfg, trial)
    try:
        data = prepare(cfg, rng)
        return [rec for rank in cfg.ranks for rec in run_trial_methods(cfg, rank, rng, data, trial, timings)]
    except NumericalFailureError as e:
        raise NumericalFailureError(f"trial {trial} of {cfg.label!r}: {e.message}", e.location) from e


def run_trials(
        cfg: SyntheticConfig, prepare: Callable[[SyntheticConfig, RandomSource], TrialData],
        n_jobs: int = 1, use_tqdm: bool = False, timings: bool = False,
) -> list[TrialRecord]:
    """Run `cfg.trials` trials over every hypothesized rank. Records come out in (trial, rank, method) order

    Trials run on `n_jobs` threads with BLAS limited to one thread, so the records do not depend on `n_jobs`.
    """
    _logger.info('Running %d trials of %r over ranks %s on %d thread(s)', cfg.trials, cfg.label, cfg.ranks, n_jobs)
    trials = tqdm(range(cfg.trials), disable=not use_tqdm, desc=f"Trials of {cfg.label}")
    with threadpool_limits(limits=1):
        per_trial = Parallel(n_jobs=n_jobs, backend='threading')(
            delayed(_run_trial_all_ranks)(cfg, trial, timings, prepare) for trial in trials)
    return [rec for records in per_trial for rec in records]


def run_simulation(cfg: SyntheticConfig, n_jobs: int = 1, use_tqdm: bool = False, timings: bool = False) \
        -> list[TrialRecord]:
    return run_trials(cfg, prepare_trial, n_jobs, use_tqdm, timings)


def records_to_frame(records: list[TrialRecord], timings: bool = False) -> pd.DataFrame:
    columns = list(RECORD_COLUMNS) + (['runtime_ms'] if timings else [])
    frame = pd.DataFrame([asdict(rec) for rec in records], columns=[f.name for f in fields(TrialRecord)])
    return frame[columns]


def figure_table(records: list[TrialRecord]) -> pd.DataFrame:
    """Coverage and length against the hypothesized rank: mean and standard error per (setting, rank, method)"""
    frame = records_to_frame(records)
    rows = []
    for (setting, rank, method, propensity), group in frame.groupby(
            ['setting', 'rank', 'method', 'propensity'], sort=True):
        summary = aggregate([TrialReport(c, ln, n, q, s) for c, ln, n, q, s in zip(
            group['avg_cov'], group['avg_length'], group['n_unobserved'], group['q_hat'], group['seed'])])
        oracle_lengths = group['oracle_length'].dropna()
        rows.append({
            'setting': setting, 'rank': int(rank), 'method': method, 'propensity': propensity,
            'n_trials': summary.n_trials,
            'avg_cov_mean': summary.avg_cov.mean, 'avg_cov_se': summary.avg_cov.se,
            'avg_length_mean': summary.avg_length.mean, 'avg_length_se': summary.avg_length.se,
            'frac_infinite': summary.frac_infinite,
            'oracle_length': float(oracle_lengths.mean()) if len(oracle_lengths) else None,
        })
    return pd.DataFrame(rows)


def summarize(cfg: SyntheticConfig, records: list[TrialRecord]) -> dict:
    """JSON-ready summary: the config, aggregate statistics per group and the figure table"""
    groups = {}
    for rec in records:
        groups.setdefault((rec.setting, rec.rank, rec.method, rec.propensity), []).append(rec.report)
    aggregates = [
        {'setting': s, 'rank': r, 'method': m, 'propensity': p, **aggregate(reports).to_dict()}
        for (s, r, m, p), reports in sorted(groups.items())
    ]
    table = figure_table(records)
    return {'config': cfg.to_dict(), 'aggregates': aggregates,
            'figure_table': table.astype(object).where(table.notna(), None).to_dict(orient='records')}
