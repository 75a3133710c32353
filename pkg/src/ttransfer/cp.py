"""Canonical (r-term) tensor format: sums of elementary outer-product tensors."""

from __future__ import annotations

import numpy as np

from .errors import CapacityError, DimensionMismatchError
from .full import FullOperator, FullTensor
from .indexing import ModeShape

DENSIFY_GUARD = 10**7


def _check_guard(total: int):
    if total > DENSIFY_GUARD:
        raise CapacityError(
            f"densify would materialize {total} entries (guard {DENSIFY_GUARD})"
        )


def _product_vector(factors) -> np.ndarray:
    """Flatten an elementary tensor in linearization order (first index fastest).

    The accumulation order (mode 1 first, each new mode as the slower axis) is
    the canonical evaluation chain; other densifiers reuse it so that
    cross-format comparisons are bit-exact.
    """
    out = np.asarray(factors[0], dtype=np.float64)
    for f in factors[1:]:
        out = (np.asarray(f, dtype=np.float64)[:, None] * out[None, :]).reshape(-1)
    return out


class CPTensor:
    """Rank-r sum of elementary tensors; factors[l][mu] is the mode-mu vector."""

    def __init__(self, shape: ModeShape, factors):
        shape = shape if isinstance(shape, ModeShape) else ModeShape(shape)
        clean = []
        for l, term in enumerate(factors):
            if len(term) != shape.ndim:
                raise DimensionMismatchError(
                    f"term {l} has {len(term)} factors, expected {shape.ndim}"
                )
            vecs = []
            for mu, (f, k) in enumerate(zip(term, shape.sizes), start=1):
                f = np.asarray(f, dtype=np.float64).reshape(-1)
                if f.size != k:
                    raise DimensionMismatchError(
                        f"term {l}, mode {mu}: factor length {f.size} != {k}"
                    )
                vecs.append(f)
            clean.append(vecs)
        self.shape = shape
        self.factors = clean

    @classmethod
    def zero(cls, shape) -> "CPTensor":
        return cls(shape, [])

    @classmethod
    def elementary(cls, vectors) -> "CPTensor":
        return cls(ModeShape([len(v) for v in vectors]), [list(vectors)])

    @property
    def rank(self) -> int:
        return len(self.factors)

    def densify(self) -> FullTensor:
        _check_guard(self.shape.total())
        data = np.zeros(self.shape.total())
        for term in self.factors:
            data += _product_vector(term)
        return FullTensor(self.shape, data)


class CPOperator:
    """Rank-r sum of elementary operators; terms[l][mu] is a mode-mu matrix."""

    def __init__(self, row_shape: ModeShape, col_shape: ModeShape, terms):
        row_shape = row_shape if isinstance(row_shape, ModeShape) else ModeShape(row_shape)
        col_shape = col_shape if isinstance(col_shape, ModeShape) else ModeShape(col_shape)
        if row_shape.ndim != col_shape.ndim:
            raise DimensionMismatchError("row and column shapes need the same order")
        clean = []
        for l, term in enumerate(terms):
            if len(term) != row_shape.ndim:
                raise DimensionMismatchError(
                    f"term {l} has {len(term)} factors, expected {row_shape.ndim}"
                )
            mats = []
            for mu, (m, kr, kc) in enumerate(
                zip(term, row_shape.sizes, col_shape.sizes), start=1
            ):
                m = np.asarray(m, dtype=np.float64)
                if m.shape != (kr, kc):
                    raise DimensionMismatchError(
                        f"term {l}, mode {mu}: matrix shape {m.shape} != ({kr}, {kc})"
                    )
                mats.append(m)
            clean.append(mats)
        self.row_shape = row_shape
        self.col_shape = col_shape
        self.terms = clean

    @classmethod
    def identity(cls, shape) -> "CPOperator":
        shape = shape if isinstance(shape, ModeShape) else ModeShape(shape)
        return cls(shape, shape, [[np.eye(k) for k in shape.sizes]])

    @property
    def rank(self) -> int:
        return len(self.terms)

    def transpose(self) -> "CPOperator":
        return CPOperator(
            self.col_shape,
            self.row_shape,
            [[m.T for m in term] for term in self.terms],
        )

    def densify(self) -> FullOperator:
        _check_guard(self.row_shape.total() * self.col_shape.total())
        mat = np.zeros((self.row_shape.total(), self.col_shape.total()))
        for term in self.terms:
            acc = term[0]
            for m in term[1:]:
                acc = np.kron(m, acc)
            mat += acc
        return FullOperator(self.row_shape, self.col_shape, mat)


def cp_add(v: CPTensor, w: CPTensor) -> CPTensor:
    if v.shape != w.shape:
        raise DimensionMismatchError(
            f"cp_add shapes differ: {v.shape.sizes} vs {w.shape.sizes}"
        )
    return CPTensor(v.shape, v.factors + w.factors)


def cp_scale(alpha: float, v: CPTensor) -> CPTensor:
    scaled = [[alpha * term[0]] + [f.copy() for f in term[1:]] for term in v.factors]
    return CPTensor(v.shape, scaled)


def cp_apply(A: CPOperator, v: CPTensor) -> CPTensor:
    if A.col_shape != v.shape:
        raise DimensionMismatchError(
            f"operator column shape {A.col_shape.sizes} does not match "
            f"tensor shape {v.shape.sizes}"
        )
    factors = []
    for term_a in A.terms:
        for term_v in v.factors:
            factors.append([m @ f for m, f in zip(term_a, term_v)])
    return CPTensor(A.row_shape, factors)


def cp_inner(v: CPTensor, w: CPTensor) -> float:
    if v.shape != w.shape:
        raise DimensionMismatchError(
            f"cp_inner shapes differ: {v.shape.sizes} vs {w.shape.sizes}"
        )
    total = 0.0
    for tv in v.factors:
        for tw in w.factors:
            prod = 1.0
            for fv, fw in zip(tv, tw):
                prod *= float(np.dot(fv, fw))
            total += prod
    return total
