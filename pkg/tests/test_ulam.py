"""Box discretization: index maps, boundary conventions, exact assemblies.

The exactness tests use a deterministic affine map so the oracle counts can
be recomputed with plain Python loops.
"""

import numpy as np
import pytest

from ttransfer.dynamics import Potential, SdeSystem, SeededRng
from ttransfer.full import apply
from ttransfer.indexing import multiindex_to_linear
from ttransfer.ulam import (
    BoxGrid,
    assemble_dense,
    assemble_tensor,
    ind,
    ind_batch,
    indicator_product,
    sample_test_points,
    subtensor_row_sums,
)


def affine_system(matrix, shift, n_steps=1):
    """Deterministic test dynamics x -> M x + b via a linear potential trick.

    With sigma = 0 and h = 1 an Euler step computes x - grad V(x), so
    grad V(x) = x - (M x + b) realizes the affine map exactly.
    """
    M = np.asarray(matrix, dtype=np.float64)
    b = np.asarray(shift, dtype=np.float64)
    pot = Potential(
        name="affine",
        dim=M.shape[0],
        value=lambda x: np.zeros(x.shape[:-1]),
        gradient=lambda x: x - (x @ M.T + b),
    )
    return SdeSystem(pot, sigma=0.0, h=1.0, n_steps=n_steps)


@pytest.fixture
def grid2():
    return BoxGrid([-2.0, -2.0], [2.0, 2.0], [4, 4])


def test_ind_basic(grid2):
    assert ind(grid2, [-2.0, -2.0]) == (1, 1)
    assert ind(grid2, [-1.5, -1.5]) == (1, 1)
    assert ind(grid2, [-1.0, -2.0]) == (2, 1)  # left edges belong to the box
    assert ind(grid2, [0.0, 0.0]) == (3, 3)
    assert ind(grid2, [1.99, 1.99]) == (4, 4)


def test_upper_boundary_belongs_to_last_box(grid2):
    assert ind(grid2, [2.0, 2.0]) == (4, 4)
    assert ind(grid2, [2.0, -2.0]) == (4, 1)


def test_outside_returns_none(grid2):
    assert ind(grid2, [2.0001, 0.0]) is None
    assert ind(grid2, [0.0, -2.5]) is None


def test_ind_agrees_with_indicator_product(grid2):
    rng = np.random.default_rng(0)
    pts = rng.uniform(-2, 2, size=(200, 2))
    for x in pts:
        i = ind(grid2, x)
        assert indicator_product(grid2, i, x) == 1
        # and every other box indicator vanishes
        others = [
            (a, b)
            for a in range(1, 5)
            for b in range(1, 5)
            if (a, b) != i
        ]
        assert sum(indicator_product(grid2, j, x) for j in others) == 0


def test_ind_batch_matches_scalar(grid2):
    rng = np.random.default_rng(1)
    pts = rng.uniform(-2.5, 2.5, size=(300, 2))
    idx, inside = ind_batch(grid2, pts)
    for x, row, ok in zip(pts, idx, inside):
        single = ind(grid2, x)
        if single is None:
            assert not ok
        else:
            assert ok and tuple(row) == single


def test_centers_ordered_by_linear_index():
    grid = BoxGrid([0.0, 0.0], [4.0, 3.0], [4, 3])
    centers = grid.centers()
    assert centers.shape == (12, 2)
    # linear index 1 is box (1,1); index 2 is (2,1): first index fastest
    np.testing.assert_allclose(centers[0], [0.5, 0.5])
    np.testing.assert_allclose(centers[1], [1.5, 0.5])
    np.testing.assert_allclose(centers[4], [0.5, 1.5])
    lin = multiindex_to_linear((3, 2), grid.shape)
    np.testing.assert_allclose(centers[lin - 1], [2.5, 1.5])


def test_sample_test_points_stay_in_their_box(grid2):
    pts = sample_test_points(grid2, 7, SeededRng(3))
    centers = grid2.centers()
    for b in range(grid2.n_boxes):
        chunk = pts[b * 7 : (b + 1) * 7]
        assert np.all(np.abs(chunk - centers[b]) <= grid2.widths / 2 + 1e-12)


def test_sample_test_points_reproducible(grid2):
    a = sample_test_points(grid2, 5, SeededRng(42))
    b = sample_test_points(grid2, 5, SeededRng(42))
    assert np.array_equal(a, b)


def test_dense_assembly_identity_map(grid2):
    sys = affine_system(np.eye(2), [0.0, 0.0])
    t = assemble_dense(grid2, sys, 10, SeededRng(0))
    assert np.array_equal(t.matrix, np.eye(16))
    assert np.all(t.kept == 10)


def test_dense_rows_stochastic_and_counts_are_oracle():
    grid = BoxGrid([-2, -2], [2, 2], [3, 3])
    sys = affine_system(0.5 * np.eye(2), [0.1, -0.2])
    n = 25
    rng = SeededRng(9)
    t = assemble_dense(grid, sys, n, rng)
    np.testing.assert_allclose(t.matrix.sum(axis=1), 1.0, atol=1e-14)

    # independent oracle: recount transitions box by box with scalar calls
    pts = sample_test_points(grid, n, SeededRng(9))
    counts = np.zeros((9, 9), dtype=int)
    kept = np.zeros(9, dtype=int)
    for b in range(9):
        for p in range(n):
            x = pts[b * n + p]
            y = 0.5 * x + np.array([0.1, -0.2])
            j = ind(grid, y)
            if j is None:
                continue
            counts[b, multiindex_to_linear(j, grid.shape) - 1] += 1
            kept[b] += 1
    assert np.array_equal(t.kept, kept)
    expected = counts / kept[:, None]
    assert np.array_equal(t.matrix, expected)


def test_tensor_assembly_equals_dense_bitwise(grid2):
    sys = affine_system(
        np.array([[0.8, 0.1], [-0.2, 0.9]]), [0.05, -0.3]
    )
    dense = assemble_dense(grid2, sys, 12, SeededRng(5))
    tensor = assemble_tensor(grid2, sys, 12, SeededRng(5))
    assert np.array_equal(tensor.densify().matrix, dense.matrix)
    assert np.array_equal(tensor.kept, dense.kept)
    assert tensor.empty_rows == dense.empty_rows


def test_cp_operator_form_matches_dense(grid2):
    sys = affine_system(0.6 * np.eye(2), [0.2, 0.2])
    dense = assemble_dense(grid2, sys, 8, SeededRng(6))
    tensor = assemble_tensor(grid2, sys, 8, SeededRng(6))
    cp_op = tensor.to_cp_operator()
    assert cp_op.rank == tensor.rank
    assert np.array_equal(cp_op.densify().matrix, dense.matrix)


def test_tt_operator_form_close_to_dense(grid2):
    sys = affine_system(0.6 * np.eye(2), [-0.1, 0.4])
    dense = assemble_dense(grid2, sys, 8, SeededRng(7))
    tt_op = assemble_tensor(grid2, sys, 8, SeededRng(7)).to_tt(0.0)
    np.testing.assert_allclose(tt_op.densify().matrix, dense.matrix, atol=1e-13)


def test_mass_loss_bookkeeping():
    # map pushes everything far to the right, so most points leave the domain
    grid = BoxGrid([-2, -2], [2, 2], [2, 2])
    sys = affine_system(np.eye(2), [10.0, 0.0])
    t = assemble_dense(grid, sys, 5, SeededRng(8))
    assert t.empty_rows == [0, 1, 2, 3]
    assert np.all(t.kept == 0)
    assert np.all(t.matrix == 0.0)
    assert np.all(t.retained_mass == 0.0)


def test_subtensor_row_sums(grid2):
    sys = affine_system(0.7 * np.eye(2), [0.0, 0.0])
    tensor = assemble_tensor(grid2, sys, 6, SeededRng(10))
    sums = subtensor_row_sums(tensor)
    np.testing.assert_allclose(sums.data, 1.0, atol=1e-14)


def test_transition_matrix_acts_on_densities(grid2):
    """P^T maps box-mass vectors to box-mass vectors, conserving kept mass."""
    sys = affine_system(0.5 * np.eye(2), [0.0, 0.0])
    dense = assemble_dense(grid2, sys, 10, SeededRng(11))
    from ttransfer.full import FullOperator, FullTensor

    op = FullOperator(grid2.shape, grid2.shape, dense.matrix).transpose()
    rho = FullTensor(grid2.shape, np.full(16, 1.0 / 16))
    pushed = apply(op, rho)
    assert pushed.data.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(pushed.data >= 0)
