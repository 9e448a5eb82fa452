"""Seeded, splittable random number generator for reproducible pipeline runs."""

import hashlib
from typing import Tuple, Union

import numpy as np

from app.controllers.ResponseCodesController import ContractError

StreamKey = Union[int, str]

MAX_SEED = 2**64 - 1


def _stream_word(part: StreamKey) -> int:
    if isinstance(part, str):
        return int.from_bytes(hashlib.sha256(part.encode()).digest()[:8], "little")
    if isinstance(part, (bool, np.bool_)) or int(part) < 0:
        raise ContractError(f"stream keys must be strings or non-negative integers, got {part!r}")
    return int(part)


class SeededRng:
    """
    Philox counter-based generator keyed by (seed, stream path).

    The stream path is fed to numpy's SeedSequence as its spawn key, so
    `fork(...)` children are independent of each other and of the order in
    which they are created. Equal (seed, path) pairs produce equal streams on
    every platform.
    """

    ALGORITHM = "numpy.random.Philox(SeedSequence(seed, spawn_key=path))"

    def __init__(self, seed: int, stream: Tuple[StreamKey, ...] = ()) -> None:
        seed = int(seed)
        if not 0 <= seed <= MAX_SEED:
            raise ContractError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self._seed = seed
        self._stream = tuple(_stream_word(part) for part in stream)
        sequence = np.random.SeedSequence(entropy=seed, spawn_key=self._stream)
        self._generator = np.random.Generator(np.random.Philox(sequence))

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def stream(self) -> Tuple[int, ...]:
        return self._stream

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def fork(self, *key: StreamKey) -> "SeededRng":
        """Child generator for a sub-task; `key` extends this generator's stream path."""
        return SeededRng(self._seed, self._stream + key)

    def random(self, size=None):
        return self._generator.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._generator.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._generator.integers(low, high, size)

    def choice(self, a, size=None, replace=True, p=None):
        return self._generator.choice(a, size=size, replace=replace, p=p)

    def permutation(self, x):
        return self._generator.permutation(x)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self._seed}, stream={self._stream})"
