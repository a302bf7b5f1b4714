from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Union

import numpy as np
from bitarray import frozenbitarray as fbarray
from bitarray.util import zeros as bazeros

from confmc.algorithms.base_functions import check_contract


Exact = Union[Fraction, int, float]


@dataclass(frozen=True)
class BagLocationLaw:
    """Law of the test location among the entries of a bag, given the training set and the bag

    `conditional` is obtained by enumeration. `odds_weights` is h_ij / Σ_bag h.
    Both map (row, column) to an exact probability.
    """
    train: fbarray
    bag: fbarray
    conditional: dict[tuple[int, int], Fraction]
    odds_weights: dict[tuple[int, int], Fraction]


def _to_fraction(value: Exact) -> Fraction:
    return value if isinstance(value, Fraction) else Fraction(str(value))


def _subsets(universe: fbarray) -> Iterator[fbarray]:
    """Every subset of the set bits of `universe`"""
    positions = list(universe.search(True))
    for code in range(2 ** len(positions)):
        subset = bazeros(len(universe))
        for k, pos in enumerate(positions):
            if code >> k & 1:
                subset[pos] = True
        yield fbarray(subset)


def enumerate_test_location_law(P, q: Exact) -> list[BagLocationLaw]:
    """Enumerate every observation, split and test-draw outcome on a small grid

    Entry (i, j) is observed with probability P[i][j], every observed entry goes to training with probability q
    and to calibration otherwise, and the test point is drawn uniformly among the unobserved entries.
    For every pair (training set, bag = calibration set + test point) reachable with positive probability,
    return the exact conditional law of the test location inside the bag together with the odds weights.

    Parameters
    ----------
    P:
        matrix (list of lists or array) of observation probabilities in (0, 1]
    q:
        split probability in (0, 1)

    Returns
    -------
    list of BagLocationLaw, one per (training set, bag), in enumeration order
    """
    rows = [[_to_fraction(p) for p in row] for row in np.asarray(P, dtype=object).tolist()]
    d2 = len(rows[0])
    probs = [p for row in rows for p in row]
    q = _to_fraction(q)
    check_contract(all(0 < p <= 1 for p in probs), 'observation probabilities should lie in (0, 1]')
    check_contract(0 < q < 1, f"split probability q={q} should lie in (0, 1)")

    n = len(probs)
    location = [(k // d2, k % d2) for k in range(n)]
    odds = [(1 - p) / p for p in probs]

    joint = defaultdict(lambda: defaultdict(Fraction))
    for observed in _subsets(fbarray(~bazeros(n))):
        unobserved = ~observed
        n_unobserved = unobserved.count()
        if n_unobserved == 0:
            continue

        p_observed = Fraction(1)
        for k in range(n):
            p_observed *= probs[k] if observed[k] else 1 - probs[k]
        if p_observed == 0:
            continue

        for train in _subsets(observed):
            cal = observed & ~train
            p_split = q ** train.count() * (1 - q) ** cal.count()
            for test in unobserved.search(True):
                bag = bazeros(n)
                bag |= cal
                bag[test] = True
                joint[(train, fbarray(bag))][test] += p_observed * p_split / n_unobserved

    laws = []
    for (train, bag), mass_per_test in joint.items():
        total = sum(mass_per_test.values())
        bag_odds = sum(odds[k] for k in bag.search(True))
        conditional = {location[k]: mass_per_test.get(k, Fraction(0)) / total for k in bag.search(True)}
        odds_weights = {location[k]: odds[k] / bag_odds for k in bag.search(True)}
        laws.append(BagLocationLaw(train, bag, conditional, odds_weights))
    return laws
