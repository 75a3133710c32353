"""Dense (full-format) tensors and operators.

Storage is a flat float64 array in linearization order (first index fastest),
so vectorization is the identity on the underlying data and matrix oracles
compare exactly.
"""

from __future__ import annotations

import io

import numpy as np

from .errors import DimensionMismatchError
from .indexing import ModeShape, linear_to_multiindex, multiindex_to_linear


class FullTensor:
    """Multidimensional array over a mode shape (k_1, ..., k_d)."""

    def __init__(self, shape: ModeShape, data):
        if not isinstance(shape, ModeShape):
            shape = ModeShape(shape)
        data = np.ascontiguousarray(data, dtype=np.float64).reshape(-1)
        if data.size != shape.total():
            raise DimensionMismatchError(
                f"data has {data.size} entries, shape {shape.sizes} needs {shape.total()}"
            )
        self.shape = shape
        self.data = data

    @classmethod
    def zeros(cls, shape) -> "FullTensor":
        shape = shape if isinstance(shape, ModeShape) else ModeShape(shape)
        return cls(shape, np.zeros(shape.total()))

    @classmethod
    def from_array(cls, array) -> "FullTensor":
        """Build from an ndarray indexed [i_1, ..., i_d] (0-based axes)."""
        array = np.asarray(array, dtype=np.float64)
        return cls(ModeShape(array.shape), array.ravel(order="F"))

    @classmethod
    def unit(cls, shape, i) -> "FullTensor":
        """Unit tensor e^i with a single 1 at the 1-based multi-index i."""
        out = cls.zeros(shape)
        out.data[multiindex_to_linear(i, out.shape) - 1] = 1.0
        return out

    def array(self) -> np.ndarray:
        """View as an ndarray with one axis per mode."""
        return self.data.reshape(self.shape.sizes, order="F")

    def __getitem__(self, i):
        return self.data[multiindex_to_linear(i, self.shape) - 1]

    def copy(self) -> "FullTensor":
        return FullTensor(self.shape, self.data.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def __repr__(self):
        return f"FullTensor(shape={self.shape.sizes})"


class FullOperator:
    """Linear operator on a tensor space, stored as its matricization."""

    def __init__(self, row_shape: ModeShape, col_shape: ModeShape, matrix):
        row_shape = row_shape if isinstance(row_shape, ModeShape) else ModeShape(row_shape)
        col_shape = col_shape if isinstance(col_shape, ModeShape) else ModeShape(col_shape)
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if matrix.shape != (row_shape.total(), col_shape.total()):
            raise DimensionMismatchError(
                f"matrix shape {matrix.shape} does not match "
                f"({row_shape.total()}, {col_shape.total()})"
            )
        self.row_shape = row_shape
        self.col_shape = col_shape
        self.matrix = matrix

    @classmethod
    def zeros(cls, row_shape, col_shape=None) -> "FullOperator":
        row_shape = row_shape if isinstance(row_shape, ModeShape) else ModeShape(row_shape)
        col_shape = col_shape or row_shape
        col_shape = col_shape if isinstance(col_shape, ModeShape) else ModeShape(col_shape)
        return cls(row_shape, col_shape, np.zeros((row_shape.total(), col_shape.total())))

    @classmethod
    def identity(cls, shape) -> "FullOperator":
        shape = shape if isinstance(shape, ModeShape) else ModeShape(shape)
        return cls(shape, shape, np.eye(shape.total()))

    @property
    def data(self) -> np.ndarray:
        """Flat storage, column index fastest within each row block."""
        return self.matrix.ravel(order="F")

    def __getitem__(self, ij):
        i, j = ij
        return self.matrix[
            multiindex_to_linear(i, self.row_shape) - 1,
            multiindex_to_linear(j, self.col_shape) - 1,
        ]

    def transpose(self) -> "FullOperator":
        return FullOperator(self.col_shape, self.row_shape, self.matrix.T)

    def __repr__(self):
        return (
            f"FullOperator(row_shape={self.row_shape.sizes}, "
            f"col_shape={self.col_shape.sizes})"
        )


def vectorize(v: FullTensor) -> np.ndarray:
    """Column vector of v in linearization order (identity on storage)."""
    return v.data.copy()


def inner(v: FullTensor, w: FullTensor) -> float:
    if v.shape != w.shape:
        raise DimensionMismatchError(
            f"inner product shapes differ: {v.shape.sizes} vs {w.shape.sizes}"
        )
    return float(np.dot(v.data, w.data))


def outer(v: FullTensor, w: FullTensor) -> FullOperator:
    return FullOperator(v.shape, w.shape, np.outer(v.data, w.data))


def apply(A: FullOperator, v: FullTensor) -> FullTensor:
    if A.col_shape != v.shape:
        raise DimensionMismatchError(
            f"operator column shape {A.col_shape.sizes} does not match "
            f"tensor shape {v.shape.sizes}"
        )
    return FullTensor(A.row_shape, A.matrix @ v.data)


def axpy(alpha: float, v: FullTensor, w: FullTensor) -> FullTensor:
    if v.shape != w.shape:
        raise DimensionMismatchError(
            f"axpy shapes differ: {v.shape.sizes} vs {w.shape.sizes}"
        )
    return FullTensor(v.shape, alpha * v.data + w.data)


def scale(alpha: float, v: FullTensor) -> FullTensor:
    return FullTensor(v.shape, alpha * v.data)


def tensor_to_csv(v: FullTensor, stream=None) -> str | None:
    """Write `i1,...,id,value` rows sorted by linear index ascending."""
    own = stream is None
    if own:
        stream = io.StringIO()
    d = v.shape.ndim
    stream.write(",".join(f"i{mu}" for mu in range(1, d + 1)) + ",value\n")
    for i_hat in range(1, v.shape.total() + 1):
        idx = linear_to_multiindex(i_hat, v.shape)
        stream.write(",".join(str(c) for c in idx))
        stream.write(f",{v.data[i_hat - 1]:.17g}\n")
    if own:
        return stream.getvalue()
    return None


def tensor_from_csv(stream_or_text) -> FullTensor:
    """Read the CSV layout written by :func:`tensor_to_csv`."""
    if isinstance(stream_or_text, str):
        lines = stream_or_text.strip().splitlines()
    else:
        lines = stream_or_text.read().strip().splitlines()
    header = lines[0].split(",")
    d = len(header) - 1
    rows = [line.split(",") for line in lines[1:]]
    indices = np.array([[int(c) for c in row[:d]] for row in rows])
    values = np.array([float(row[d]) for row in rows])
    sizes = indices.max(axis=0)
    shape = ModeShape(sizes)
    data = np.zeros(shape.total())
    for idx, val in zip(indices, values):
        data[multiindex_to_linear(idx, shape) - 1] = val
    return FullTensor(shape, data)
