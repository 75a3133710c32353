"""Box discretization and assembly of the transfer-operator approximation.

The transition matrix is estimated by mapping seeded test points through the
flow map and counting box-to-box transitions; the tensor assembly reuses the
identical counts, so both formulations agree entry by entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cp import CPOperator, _check_guard
from .dynamics import STREAM_TEST_POINTS, SdeSystem, SeededRng, flow_map_batch
from .errors import DimensionMismatchError
from .full import FullOperator, FullTensor
from .indexing import ModeShape, multiindex_array_to_linear
from .tt import TTOperator, full_to_tt_operator


@dataclass(frozen=True)
class BoxGrid:
    """Uniform axis-aligned partition of a box domain.

    Subintervals are half-open [left, right) except the last one in each
    dimension, which is closed so the upper boundary belongs to the grid.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    counts: tuple[int, ...]

    def __init__(self, lower, upper, counts):
        lower = tuple(float(a) for a in lower)
        upper = tuple(float(b) for b in upper)
        counts = tuple(int(k) for k in counts)
        if not len(lower) == len(upper) == len(counts):
            raise DimensionMismatchError("lower/upper/counts lengths differ")
        if any(b <= a for a, b in zip(lower, upper)):
            raise ValueError("domain intervals must have positive length")
        if any(k < 1 for k in counts):
            raise ValueError("subdivision counts must be positive")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "counts", counts)

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> ModeShape:
        return ModeShape(self.counts)

    @property
    def widths(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / np.array(self.counts)

    @property
    def n_boxes(self) -> int:
        return self.shape.total()

    def box_volume(self) -> float:
        return float(np.prod(self.widths))

    def centers(self) -> np.ndarray:
        """Box centers as an (n_boxes, d) array ordered by linear index."""
        axes = [
            a + (np.arange(k) + 0.5) * w
            for a, k, w in zip(self.lower, self.counts, self.widths)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        # linear order is first index fastest
        return np.stack([m.ravel(order="F") for m in mesh], axis=1)


def ind_batch(grid: BoxGrid, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Multi-indices (1-based) and inside-mask for an (n, d) batch of points."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    lower = np.array(grid.lower)
    upper = np.array(grid.upper)
    counts = np.array(grid.counts)
    inside = np.all((x >= lower) & (x <= upper), axis=1)
    idx = np.floor((x - lower) / grid.widths).astype(np.int64) + 1
    # the upper boundary belongs to the last (closed) subinterval
    np.clip(idx, 1, counts, out=idx)
    return idx, inside


def ind(grid: BoxGrid, x) -> tuple[int, ...] | None:
    """Multi-index of the box containing x, or None when x leaves the domain."""
    idx, inside = ind_batch(grid, np.asarray(x, dtype=np.float64)[None, :])
    if not inside[0]:
        return None
    return tuple(int(c) for c in idx[0])


def indicator_product(grid: BoxGrid, i, x) -> int:
    """Product of the one-dimensional subinterval indicators for box i."""
    x = np.asarray(x, dtype=np.float64)
    out = 1
    for mu, (c, a, k, w) in enumerate(
        zip(i, grid.lower, grid.counts, grid.widths)
    ):
        left = a + (c - 1) * w
        right = a + c * w
        if c == k:
            hit = left <= x[mu] <= right
        else:
            hit = left <= x[mu] < right
        out *= int(hit)
    return out


def sample_test_points(grid: BoxGrid, n: int, rng: SeededRng) -> np.ndarray:
    """n uniform points per box, ordered by (box linear index, point index)."""
    if n < 1:
        raise ValueError("need at least one test point per box")
    lows = grid.centers() - grid.widths / 2.0
    out = np.empty((grid.n_boxes * n, grid.dim))
    for b in range(grid.n_boxes):
        u = rng.uniform((n, grid.dim), STREAM_TEST_POINTS, b)
        out[b * n : (b + 1) * n] = lows[b] + u * grid.widths
    return out


@dataclass
class TransitionDense:
    """Row-stochastic Ulam matrix with per-row retained-mass bookkeeping."""

    grid: BoxGrid
    matrix: np.ndarray
    kept: np.ndarray
    n_points: int
    empty_rows: list = field(default_factory=list)

    @property
    def retained_mass(self) -> np.ndarray:
        return self.kept / self.n_points


@dataclass
class TransitionCP:
    """Ulam operator as a count-merged sum of elementary tensors e^i (x) e^j."""

    grid: BoxGrid
    row_linear: np.ndarray  # 0-based linear row indices, one per nonzero
    col_linear: np.ndarray
    weights: np.ndarray
    kept: np.ndarray
    n_points: int
    empty_rows: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return len(self.weights)

    @property
    def retained_mass(self) -> np.ndarray:
        return self.kept / self.n_points

    def densify(self) -> FullOperator:
        k_hat = self.grid.n_boxes
        _check_guard(k_hat * k_hat)
        mat = np.zeros((k_hat, k_hat))
        mat[self.row_linear, self.col_linear] = self.weights
        return FullOperator(self.grid.shape, self.grid.shape, mat)

    def to_cp_operator(self) -> CPOperator:
        shape = self.grid.shape
        sizes = shape.sizes
        terms = []
        for i_lin, j_lin, w in zip(self.row_linear, self.col_linear, self.weights):
            mats = []
            ri, rj = int(i_lin), int(j_lin)
            for mu, k in enumerate(sizes):
                m = np.zeros((k, k))
                m[ri % k, rj % k] = w if mu == 0 else 1.0
                mats.append(m)
                ri //= k
                rj //= k
            terms.append(mats)
        return CPOperator(shape, shape, terms)

    def to_tt(self, eps: float = 0.0, r_max: int | None = None) -> TTOperator:
        """TT operator via densify + TT-SVD (guarded by the densify limit)."""
        return full_to_tt_operator(self.densify(), eps, r_max)


def _map_test_points(grid, sys, n, rng, batch_tag):
    points = sample_test_points(grid, n, rng)
    images = flow_map_batch(sys, points, rng, batch_tag)
    j_idx, inside = ind_batch(grid, images)
    rows = np.repeat(np.arange(grid.n_boxes, dtype=np.int64), n)
    cols = multiindex_array_to_linear(j_idx, grid.shape)
    return rows[inside], cols[inside], rows, inside


def _row_counts(grid, rows_kept, rows_all, inside, n):
    kept = np.bincount(rows_all[inside], minlength=grid.n_boxes)
    empty = np.flatnonzero(kept == 0).tolist()
    return kept, empty


def assemble_dense(
    grid: BoxGrid, sys: SdeSystem, n: int, rng: SeededRng, batch_tag: int = 0
) -> TransitionDense:
    """Ulam matrix from n seeded test points per box.

    Points mapped outside the domain are dropped and the row renormalized
    over the kept points; rows with no kept points are reported empty.
    """
    rows, cols, rows_all, inside = _map_test_points(grid, sys, n, rng, batch_tag)
    kept, empty = _row_counts(grid, rows, rows_all, inside, n)
    k_hat = grid.n_boxes
    counts = np.zeros((k_hat, k_hat), dtype=np.int64)
    np.add.at(counts, (rows, cols), 1)
    matrix = np.zeros((k_hat, k_hat))
    nonzero = kept > 0
    matrix[nonzero] = counts[nonzero] / kept[nonzero, None]
    return TransitionDense(grid, matrix, kept, n, empty)


def assemble_tensor(
    grid: BoxGrid, sys: SdeSystem, n: int, rng: SeededRng, batch_tag: int = 0
) -> TransitionCP:
    """Count-merged elementary-tensor form of the Ulam operator.

    Uses the identical point stream as :func:`assemble_dense`, so with the
    same seed the densified result reproduces the dense matrix exactly.
    """
    rows, cols, rows_all, inside = _map_test_points(grid, sys, n, rng, batch_tag)
    kept, empty = _row_counts(grid, rows, rows_all, inside, n)
    k_hat = grid.n_boxes
    flat = rows * k_hat + cols
    uniq, cnt = np.unique(flat, return_counts=True)
    row_lin = uniq // k_hat
    col_lin = uniq % k_hat
    weights = cnt / kept[row_lin]
    return TransitionCP(grid, row_lin, col_lin, weights, kept, n, empty)


def subtensor_row_sums(P: TransitionCP | FullOperator) -> FullTensor:
    """Sum over the column multi-index for each fixed row multi-index."""
    if isinstance(P, TransitionCP):
        sums = np.zeros(P.grid.n_boxes)
        np.add.at(sums, P.row_linear, P.weights)
        return FullTensor(P.grid.shape, sums)
    return FullTensor(P.row_shape, P.matrix.sum(axis=1))
