from .abstract_propensity import (
    PropensityModel, AbstractPropensityEstimator, ConvergenceWarning, CLIP_EPS,
    odds, fit_homogeneous, HomogeneousPropensity, OraclePropensity,
)
from .logistic import LogisticRowColParams, LogisticRowColPropensity, fit_logistic_rowcol
from .one_bit import Link, IDENTITY, OneBitConfig, OneBitPropensity, fit_onebit
