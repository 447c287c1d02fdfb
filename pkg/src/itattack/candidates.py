"""Ordered supplies of candidate perturbation directions for local search."""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from .tensor import Dims, ImageTensor, RngStream


class CandidateSource:
    """Draws unit-norm candidate vectors without replacement."""

    def next(self) -> Optional[ImageTensor]:
        raise NotImplementedError


class PixelBasis(CandidateSource):
    """One one-hot unit vector per (channel, row, col) coordinate, traversed
    in a seeded uniform shuffle; spans the full input space."""

    def __init__(self, dims: Dims, rng: RngStream,
                 value_range: tuple[float, float] = (-1.0, 1.0)):
        self.dims = dims
        self.value_range = value_range
        self._order = rng.generator().permutation(int(np.prod(dims)))
        self._pos = 0

    def __len__(self) -> int:
        return len(self._order) - self._pos

    def next(self) -> Optional[ImageTensor]:
        if self._pos >= len(self._order):
            return None
        coord = self._order[self._pos]
        self._pos += 1
        flat = np.zeros(int(np.prod(self.dims)), dtype=np.float32)
        flat[coord] = 1.0
        return ImageTensor(flat.reshape(self.dims), self.value_range)


class SequenceSource(CandidateSource):
    """Serves a fixed list of candidates in order (e.g. leaked components)."""

    def __init__(self, vectors: Iterable[ImageTensor]):
        self._vectors = list(vectors)
        self._pos = 0

    def __len__(self) -> int:
        return len(self._vectors) - self._pos

    def next(self) -> Optional[ImageTensor]:
        if self._pos >= len(self._vectors):
            return None
        vec = self._vectors[self._pos]
        self._pos += 1
        return vec
