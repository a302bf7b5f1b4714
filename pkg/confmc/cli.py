import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from confmc.algorithms.base_functions import ContractViolationError, NumericalFailureError
from confmc.algorithms.conformal import cmc_intervals, exact_split_intervals, full_cmc_intervals, full_sets_to_intervals
from confmc.completers import ALSCompleter, NuclearNormCompleter
from confmc.matrices import ObservedMatrix, RandomSource, IntervalMatrix, split_observed
from confmc.propensity import HomogeneousPropensity, LogisticRowColPropensity, OneBitPropensity, OneBitConfig
from confmc.experiments.config import SyntheticConfig, ConfigError, BaseModel, METHODS, PROPENSITY_FITS
from confmc.experiments.presets import PRESETS, load_preset
from confmc.experiments.runner import run_simulation, records_to_frame, summarize, SPLIT_STREAM, EXTRA_STREAM
from confmc.experiments.real_data import MatrixParseError, MaskSpec, read_matrix_csv, evaluate_matrix


_logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID_INPUT, EXIT_NUMERICAL_FAILURE = 0, 2, 3

COMPLETE_PROPENSITIES = ('homogeneous', 'logistic', 'onebit')
COMPLETE_METHODS = ('oneshot', 'exact', 'full')
INTERVAL_COLUMNS = ('row', 'col', 'm_hat', 'lower', 'upper')


def load_config(path: str) -> SyntheticConfig:
    try:
        with open(path) as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError('<root>', f"{path} is not valid JSON ({e})")
    return SyntheticConfig.from_dict(raw)


def json_ready(value):
    """Turn a summary into strict JSON: numpy scalars become Python ones, NaN becomes null, ±inf a string"""
    if isinstance(value, dict):
        return {str(k): json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_ready(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
    return value


def write_records(records, out: str, timings: bool):
    records_to_frame(records, timings).to_csv(out, index=False, float_format='%.17g')
    _logger.info('Wrote %d records to %s', len(records), out)


def write_summary(summary: dict, path: str):
    with open(path, 'w') as f:
        json.dump(json_ready(summary), f, indent=2, allow_nan=False)
    _logger.info('Wrote the summary to %s', path)


def write_intervals(path: str, m_hat: np.ndarray, intervals: IntervalMatrix):
    rows, cols = np.nonzero(intervals.target_mask)
    frame = pd.DataFrame({
        'row': rows, 'col': cols, 'm_hat': m_hat[rows, cols],
        'lower': intervals.lower[rows, cols], 'upper': intervals.upper[rows, cols],
    }, columns=list(INTERVAL_COLUMNS))
    frame.to_csv(path, index=False, float_format='%.17g')
    _logger.info('Wrote %d intervals to %s', len(frame), path)


def simulation_config(args) -> SyntheticConfig:
    """The config named on the command line. `--desk` alone stands for the desk preset"""
    if args.config is not None:
        cfg = load_config(args.config)
    elif args.preset is not None:
        cfg = load_preset(args.preset)
    elif args.desk:
        cfg = load_preset('desk')
    else:
        raise ConfigError('<root>', 'simulate needs one of --config, --preset or --desk')

    if args.desk:
        cfg = cfg.desk()
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def cmd_simulate(args) -> int:
    cfg = simulation_config(args)
    records = run_simulation(cfg, n_jobs=args.threads, use_tqdm=not args.no_progress, timings=args.timings)
    write_records(records, args.out, args.timings)
    if args.summary is not None:
        write_summary(summarize(cfg, records), args.summary)
    return EXIT_OK


def cmd_complete(args) -> int:
    values = read_matrix_csv(args.matrix)
    obs = ObservedMatrix(values, ~np.isnan(values))
    obs.require_observations('completion')
    rng = RandomSource(args.seed)
    split = split_observed(obs, args.split_prob, rng.child(SPLIT_STREAM))

    if args.base == 'als':
        completer = ALSCompleter(args.rank, rng=rng.child(EXTRA_STREAM).child(0))
    else:
        completer = NuclearNormCompleter(args.rank)
    estimator = {
        'homogeneous': HomogeneousPropensity(),
        'logistic': LogisticRowColPropensity(),
        'onebit': OneBitPropensity(OneBitConfig()),
    }[args.propensity]
    prop = estimator.fit(split)
    _logger.info('Fitted %s propensities on %d training entries', args.propensity, split.n_train)

    if args.method == 'full':
        p_hat = obs.n_observed / obs.mask.size

        def refit(augmented: ObservedMatrix):
            est = completer.estimate(augmented, p_hat)
            return est.m_hat, est.s_hat

        m_hat = completer.complete(obs)
        sets = full_cmc_intervals(obs, prop, refit, args.alpha, n_jobs=args.threads, use_tqdm=not args.no_progress)
        intervals = full_sets_to_intervals(sets, obs.dims)
    else:
        train = obs.restrict(split.train_mask)
        est = completer.estimate(train, min(split.n_train / (obs.mask.size * args.split_prob), 1.0))
        intervals_fn = cmc_intervals if args.method == 'oneshot' else exact_split_intervals
        intervals = intervals_fn(est, prop, split, obs, args.alpha)
        m_hat = est.m_hat

    write_intervals(args.out, m_hat, intervals)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    M = read_matrix_csv(args.matrix)
    ranks = tuple(args.ranks) if args.ranks else (min(8, *M.shape),)
    cfg = SyntheticConfig(
        label=Path(args.matrix).stem, dims=M.shape, true_rank=min(8, *M.shape), alpha=args.alpha,
        trials=args.trials, ranks=ranks, base=BaseModel(args.base), propensity_fit=tuple(args.propensity),
        method=tuple(args.methods), seed=args.seed, split_prob=args.split_prob,
    )
    records = evaluate_matrix(M, MaskSpec.parse(args.mask), cfg, n_jobs=args.threads,
                              use_tqdm=not args.no_progress, timings=args.timings)
    write_records(records, args.out, args.timings)
    if args.summary is not None:
        write_summary(summarize(cfg, records), args.summary)
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser, seed_default: Optional[int] = 0):
    p.add_argument('--seed', type=int, default=seed_default, help='Master seed.')
    p.add_argument('--threads', type=int, default=1, help='Number of worker threads (default: 1).')
    p.add_argument('--no-progress', action='store_true', help='Disable the progress bar.')
    p.add_argument('--verbose', '-v', action='store_true', help='Log run-level events.')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='confmc', description='Conformalized matrix completion: intervals for the missing entries of a matrix.')
    subparsers = parser.add_subparsers(dest='command', required=True)

    p = subparsers.add_parser('simulate', help='Run a synthetic experiment.')
    source = p.add_mutually_exclusive_group()
    source.add_argument('--config', help='JSON file mirroring the fields of a synthetic config.')
    source.add_argument('--preset', choices=sorted(PRESETS), help='Named experiment.')
    p.add_argument('--desk', action='store_true',
                   help='Shrink to d=80, r*=3 and 200 trials. Without --config or --preset, runs the desk preset.')
    p.add_argument('--out', default='results.csv', help='Results CSV, one row per trial record.')
    p.add_argument('--summary', default=None, help='JSON summary with aggregate statistics.')
    p.add_argument('--timings', action='store_true', help='Add a runtime_ms column.')
    _add_common(p, seed_default=None)
    p.set_defaults(func=cmd_simulate)

    p = subparsers.add_parser('complete', help='Intervals for the missing entries of a CSV matrix.')
    p.add_argument('--matrix', required=True, help='Headerless CSV, empty cells are missing entries.')
    p.add_argument('--alpha', type=float, default=0.1, help='Miscoverage level (default: 0.1).')
    p.add_argument('--rank', type=int, required=True, help='Hypothesized rank of the base completer.')
    p.add_argument('--method', choices=COMPLETE_METHODS, default='oneshot')
    p.add_argument('--propensity', choices=COMPLETE_PROPENSITIES, default='homogeneous')
    p.add_argument('--base', choices=('als', 'cvx'), default='als')
    p.add_argument('--split-prob', type=float, default=0.8, dest='split_prob',
                   help='Probability of sending an observed entry to the training set (default: 0.8).')
    p.add_argument('--out', required=True, help='Output CSV with columns row, col, m_hat, lower, upper.')
    _add_common(p)
    p.set_defaults(func=cmd_complete)

    p = subparsers.add_parser('evaluate', help='Mask a complete CSV matrix and score the intervals.')
    p.add_argument('--matrix', required=True, help='Headerless CSV without missing cells.')
    p.add_argument('--mask', required=True, help="'homogeneous:p' or 'het:k'.")
    p.add_argument('--trials', type=int, default=100)
    p.add_argument('--alpha', type=float, default=0.1)
    p.add_argument('--ranks', type=int, nargs='+', default=None)
    p.add_argument('--methods', nargs='+', choices=METHODS, default=['cmc_oneshot', 'model_based'])
    p.add_argument('--propensity', nargs='+', choices=PROPENSITY_FITS, default=['homogeneous'])
    p.add_argument('--base', choices=('als', 'cvx'), default='als')
    p.add_argument('--split-prob', type=float, default=0.8, dest='split_prob')
    p.add_argument('--out', default='results.csv')
    p.add_argument('--summary', default=None)
    p.add_argument('--timings', action='store_true')
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    try:
        return args.func(args)
    except (ConfigError, MatrixParseError, ContractViolationError, FileNotFoundError) as e:
        _logger.error('%s', e)
        return EXIT_INVALID_INPUT
    except NumericalFailureError as e:
        _logger.error('%s', e)
        return EXIT_NUMERICAL_FAILURE


if __name__ == '__main__':
    sys.exit(main())
