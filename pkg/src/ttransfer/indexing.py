"""Multi-index machinery: mode shapes and the linearization bijection.

All indices are 1-based at the API surface. The linearization runs with the
first index fastest, i.e. the multi-index (i_1, ..., i_d) maps to

    i_hat = 1 + sum_mu (prod_{nu < mu} k_nu) * (i_mu - 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

from .errors import IndexRangeError


@dataclass(frozen=True)
class ModeShape:
    """Mode sizes (k_1, ..., k_d) of a tensor space."""

    sizes: tuple[int, ...]

    def __init__(self, sizes):
        sizes = tuple(int(k) for k in sizes)
        if len(sizes) < 1:
            raise ValueError("a mode shape needs at least one mode")
        if any(k < 1 for k in sizes):
            raise ValueError(f"mode sizes must be positive, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def ndim(self) -> int:
        return len(self.sizes)

    def total(self) -> int:
        return prod(self.sizes)

    def strides(self) -> tuple[int, ...]:
        """Linearization weights prod_{nu < mu} k_nu per mode."""
        out = []
        acc = 1
        for k in self.sizes:
            out.append(acc)
            acc *= k
        return tuple(out)

    def __iter__(self):
        return iter(self.sizes)

    def __len__(self):
        return len(self.sizes)


def check_multiindex(i, shape: ModeShape) -> tuple[int, ...]:
    """Validate a 1-based multi-index against a shape and return it as a tuple."""
    i = tuple(int(c) for c in i)
    if len(i) != shape.ndim:
        raise IndexRangeError(
            f"multi-index has {len(i)} components, shape has {shape.ndim} modes"
        )
    for mu, (c, k) in enumerate(zip(i, shape.sizes), start=1):
        if not 1 <= c <= k:
            raise IndexRangeError(
                f"index component i_{mu}={c} out of range [1, {k}] in mode {mu}"
            )
    return i


def multiindex_to_linear(i, shape: ModeShape) -> int:
    """Map a 1-based multi-index to its 1-based linear index."""
    i = check_multiindex(i, shape)
    return 1 + sum(w * (c - 1) for w, c in zip(shape.strides(), i))


def linear_to_multiindex(i_hat: int, shape: ModeShape) -> tuple[int, ...]:
    """Inverse of :func:`multiindex_to_linear`."""
    i_hat = int(i_hat)
    if not 1 <= i_hat <= shape.total():
        raise IndexRangeError(
            f"linear index {i_hat} out of range [1, {shape.total()}]"
        )
    rem = i_hat - 1
    out = []
    for k in shape.sizes:
        out.append(rem % k + 1)
        rem //= k
    return tuple(out)


def multiindex_array_to_linear(indices: np.ndarray, shape: ModeShape) -> np.ndarray:
    """Vectorized linearization of an (n, d) array of 1-based multi-indices.

    Returns 0-based linear offsets (i_hat - 1), convenient for array indexing.
    """
    indices = np.asarray(indices)
    strides = np.array(shape.strides(), dtype=np.int64)
    return (indices - 1) @ strides
