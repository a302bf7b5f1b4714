from .abstract_completer import (
    AbstractCompleter, FactorModel, CompletionEstimate, DegenerateScaleWarning,
    estimate_noise, estimate_local_scale, model_based_intervals, standardized_scores,
)
from .als import ALSCompleter, als_fit
from .nuclear_norm import NuclearNormCompleter, prox_nuclear_fit
