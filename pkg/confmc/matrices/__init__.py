from .random_source import RandomSource
from .observed_matrix import ObservedMatrix, MaskSplit, observe, split_observed
from .interval_matrix import IntervalMatrix
