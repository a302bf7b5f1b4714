from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RandomSource:
    """Reproducible random stream identified by a pair (seed, stream_id)

    The stream is a counter-based Philox generator keyed by numpy's SeedSequence,
    so streams with distinct `stream_id` (or distinct `path` of spawned children) are independent
    and the draws do not depend on the order in which streams are consumed.
    """
    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = field(default=())

    def __post_init__(self):
        for name, value in [('seed', self.seed), ('stream_id', self.stream_id)]:
            if not (0 <= int(value) < 2**64):
                raise ValueError(f"`{name}` should be a 64-bit unsigned integer, got {value}")

    def generator(self) -> np.random.Generator:
        """Return a fresh generator positioned at the beginning of the stream"""
        seed_seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),) + self.path)
        return np.random.Generator(np.random.Philox(seed_seq))

    def child(self, key: int) -> 'RandomSource':
        """Return an independent sub-stream labelled by `key`"""
        return RandomSource(self.seed, self.stream_id, self.path + (int(key),))
