import numpy as np
import pytest

from confmc.matrices import RandomSource


def test_same_stream_same_draws():
    a = RandomSource(7, stream_id=3).generator().random(10)
    b = RandomSource(7, stream_id=3).generator().random(10)
    assert np.array_equal(a, b)


def test_streams_differ():
    base = RandomSource(7)
    draws = [
        base.generator().random(5),
        RandomSource(7, stream_id=1).generator().random(5),
        RandomSource(8).generator().random(5),
        base.child(0).generator().random(5),
        base.child(1).generator().random(5),
        base.child(0).child(0).generator().random(5),
    ]
    for i in range(len(draws)):
        for j in range(i + 1, len(draws)):
            assert not np.array_equal(draws[i], draws[j])


def test_order_of_consumption_does_not_matter():
    rng = RandomSource(1, stream_id=4)
    first_a = rng.child(0).generator().random(3)
    rng.child(1).generator().random(1000)
    second_a = rng.child(0).generator().random(3)
    assert np.array_equal(first_a, second_a)


def test_invalid_seed():
    with pytest.raises(ValueError):
        RandomSource(-1)
    with pytest.raises(ValueError):
        RandomSource(2**64)
    with pytest.raises(ValueError):
        RandomSource(0, stream_id=-5)
