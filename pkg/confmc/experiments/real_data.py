import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from confmc.matrices import RandomSource
from .config import SyntheticConfig, ConfigError
from .runner import TrialRecord, TrialData, prepare_masked_trial, run_trials, PROPENSITY_STREAM
from .synthetic import gen_hetero_propensity


PathLike = Union[str, Path]


@dataclass
class MatrixParseError(ValueError):
    row: int  # 1-based
    column: int  # 1-based, 0 when the whole row is malformed
    message: str

    def __str__(self):
        return f"Cannot parse the matrix at row {self.row}, column {self.column}: {self.message}"


@dataclass(frozen=True)
class MaskSpec:
    """Masking protocol: every entry observed with probability `p`, or propensities of rank `k_star` in logit"""
    kind: str
    p: float = 0.0
    k_star: int = 0

    @classmethod
    def parse(cls, spec: str) -> 'MaskSpec':
        kind, _, value = spec.partition(':')
        try:
            if kind == 'homogeneous':
                p = float(value)
                if not 0 <= p <= 1:
                    raise ValueError(f"{p} is not a probability")
                return cls('homogeneous', p=p)
            if kind == 'het':
                k_star = int(value)
                if k_star < 1:
                    raise ValueError(f"{k_star} is not a positive integer")
                return cls('het', k_star=k_star)
        except ValueError as e:
            raise ConfigError('mask', f"cannot parse {spec!r}: {e}")
        raise ConfigError('mask', f"expected 'homogeneous:p' or 'het:k', got {spec!r}")

    def propensities(self, dims: tuple[int, int], rng: RandomSource) -> np.ndarray:
        if self.kind == 'homogeneous':
            return np.full(dims, self.p)
        return gen_hetero_propensity(dims, self.k_star, rng)


def read_matrix_csv(path: PathLike) -> np.ndarray:
    """Read a headerless CSV of numbers. Empty cells are missing entries, returned as NaN"""
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise MatrixParseError(1, 0, 'the file is empty')
    except pd.errors.ParserError as e:
        raise MatrixParseError(_parser_error_line(str(e)), 0, f"inconsistent number of fields ({e})")

    padded = raw.isna().to_numpy()
    if raw.shape[1] > 1 and padded.any():
        i = int(np.flatnonzero(padded.any(axis=1))[0])
        n_fields = int(np.argmax(padded[i]))
        raise MatrixParseError(i + 1, n_fields + 1, f"row has {n_fields} fields, expected {raw.shape[1]}")

    cells = raw.fillna('').to_numpy(dtype=str)
    values = np.full(cells.shape, np.nan)
    for (i, j), cell in np.ndenumerate(cells):
        cell = cell.strip()
        if cell == '':
            continue
        try:
            values[i, j] = float(cell)
        except ValueError:
            raise MatrixParseError(i + 1, j + 1, f"non-numeric cell {cell!r}")
        if not np.isfinite(values[i, j]):
            raise MatrixParseError(i + 1, j + 1, f"non-finite cell {cell!r}")
    return values


def _parser_error_line(message: str) -> int:
    words = message.replace(',', ' ').split()
    for before, word in zip(words, words[1:]):
        if before == 'line' and word.isdigit():
            return int(word)
    return 0


def write_matrix_csv(path: PathLike, values: np.ndarray):
    """Write a matrix as a headerless CSV, NaN as empty cells, floats with round-trip precision"""
    frame = pd.DataFrame(np.asarray(values, dtype=np.float64))
    frame.to_csv(path, header=False, index=False, float_format='%.17g', na_rep='', quoting=csv.QUOTE_MINIMAL)


def require_complete(values: np.ndarray):
    missing = np.argwhere(np.isnan(values))
    if len(missing):
        i, j = missing[0]
        raise MatrixParseError(int(i) + 1, int(j) + 1, 'missing cell in a matrix that should be complete')


def evaluate_matrix(
        M: np.ndarray, mask_spec: Union[str, MaskSpec], cfg: SyntheticConfig,
        n_jobs: int = 1, use_tqdm: bool = False, timings: bool = False,
) -> list[TrialRecord]:
    """Masking protocol on a fully known matrix: every trial draws an observation mask, runs the pipeline
    and scores the intervals on the masked entries"""
    M = np.asarray(M, dtype=np.float64)
    require_complete(M)
    mask_spec = MaskSpec.parse(mask_spec) if isinstance(mask_spec, str) else mask_spec
    cfg = cfg.with_overrides(dims=M.shape, true_rank=min(cfg.true_rank, *M.shape))
    if mask_spec.kind == 'het' and cfg.one_bit_k_star is None:
        cfg = cfg.with_overrides(one_bit_k_star=mask_spec.k_star)

    def prepare(trial_cfg: SyntheticConfig, rng: RandomSource) -> TrialData:
        P = mask_spec.propensities(M.shape, rng.child(PROPENSITY_STREAM))
        return prepare_masked_trial(trial_cfg, M, P, rng)

    return run_trials(cfg, prepare, n_jobs, use_tqdm, timings)


def evaluate_real(
        matrix_csv_path: PathLike, mask_spec: Union[str, MaskSpec], cfg: SyntheticConfig,
        n_jobs: int = 1, use_tqdm: bool = False, timings: bool = False,
) -> list[TrialRecord]:
    return evaluate_matrix(read_matrix_csv(matrix_csv_path), mask_spec, cfg, n_jobs, use_tqdm, timings)
