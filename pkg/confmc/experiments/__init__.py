from .config import ConfigError, SyntheticConfig, FactorDist, NoiseModel, Missingness, BaseModel, METHODS, PROPENSITY_FITS
from .presets import PRESETS, load_preset
from .runner import TrialData, TrialRecord, run_trial, run_trial_methods, run_simulation, figure_table, summarize
from .real_data import MatrixParseError, MaskSpec, read_matrix_csv, write_matrix_csv, evaluate_real
