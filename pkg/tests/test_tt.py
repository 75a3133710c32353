"""Tensor-train format: rounding contract, conversions, arithmetic."""

import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ttransfer.cp import CPOperator, CPTensor
from ttransfer.full import FullOperator, FullTensor, apply
from ttransfer.tt import (
    TTOperator,
    TTVector,
    cp_op_to_tt,
    cp_to_tt,
    full_to_tt,
    full_to_tt_operator,
    tt_add,
    tt_apply,
    tt_dump,
    tt_inner,
    tt_load,
    tt_norm,
    tt_op_add,
    tt_op_scale,
    tt_round,
    tt_round_operator,
    tt_scale,
)


def random_tt(sizes, ranks, rng):
    full_ranks = [1] + list(ranks) + [1]
    cores = [
        rng.standard_normal((full_ranks[mu], k, full_ranks[mu + 1]))
        for mu, k in enumerate(sizes)
    ]
    return TTVector(cores)


tt_cases = st.integers(min_value=2, max_value=5).flatmap(
    lambda d: st.tuples(
        st.lists(st.integers(2, 4), min_size=d, max_size=d),
        st.lists(st.integers(1, 4), min_size=d - 1, max_size=d - 1),
        st.integers(0, 2**31 - 1),
    )
)


def test_entry_is_product_of_core_slices():
    rng = np.random.default_rng(0)
    v = random_tt([3, 4, 2], [2, 3], rng)
    dense = v.densify()
    for idx in [(1, 1, 1), (3, 4, 2), (2, 3, 1)]:
        assert v.entry(idx) == pytest.approx(dense[idx], rel=1e-12)


def test_densify_matches_entrywise_product():
    rng = np.random.default_rng(1)
    v = random_tt([2, 3, 2], [3, 2], rng)
    arr = v.densify().array()
    for idx in np.ndindex(2, 3, 2):
        mat = np.ones((1, 1))
        for core, c in zip(v.cores, idx):
            mat = mat @ core[:, c, :]
        assert arr[idx] == pytest.approx(mat[0, 0], rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(tt_cases)
def test_full_to_tt_exact_roundtrip(case):
    sizes, ranks, seed = case
    rng = np.random.default_rng(seed)
    v = random_tt(sizes, ranks, rng).densify()
    w = full_to_tt(v, 0.0)
    np.testing.assert_allclose(w.densify().data, v.data, atol=1e-10 * v.norm())


@settings(max_examples=40, deadline=None)
@given(tt_cases, st.sampled_from([1e-1, 1e-4, 1e-8]))
def test_rounding_contract(case, eps):
    sizes, ranks, seed = case
    rng = np.random.default_rng(seed)
    v = random_tt(sizes, ranks, rng)
    w = tt_round(v, eps)
    err = np.linalg.norm(w.densify().data - v.densify().data)
    assert err <= eps * tt_norm(v) * (1 + 1e-12)
    assert all(rw <= rv for rw, rv in zip(w.ranks, v.ranks))


def test_rounding_idempotent_ranks():
    rng = np.random.default_rng(2)
    v = random_tt([4, 4, 4], [6, 6], rng)
    w = tt_round(v, 1e-3)
    w2 = tt_round(w, 1e-3)
    assert w2.ranks == w.ranks


def test_round_with_rank_cap():
    rng = np.random.default_rng(3)
    v = random_tt([5, 5, 5], [8, 8], rng)
    w = tt_round(v, 0.0, r_max=2)
    assert max(w.ranks) <= 2


def test_add_is_block_diagonal():
    rng = np.random.default_rng(4)
    a = random_tt([3, 3], [2], rng)
    b = random_tt([3, 3], [3], rng)
    c = tt_add(a, b)
    assert c.ranks == [1, 5, 1]
    np.testing.assert_allclose(
        c.densify().data, a.densify().data + b.densify().data, atol=1e-12
    )


def test_scale_and_inner_and_norm():
    rng = np.random.default_rng(5)
    a = random_tt([2, 4, 3], [2, 2], rng)
    b = random_tt([2, 4, 3], [3, 1], rng)
    assert tt_inner(a, b) == pytest.approx(
        np.dot(a.densify().data, b.densify().data), rel=1e-12
    )
    assert tt_norm(a) == pytest.approx(np.linalg.norm(a.densify().data), rel=1e-12)
    np.testing.assert_allclose(
        tt_scale(2.0, a).densify().data, 2.0 * a.densify().data, atol=1e-12
    )


def test_apply_matches_dense():
    rng = np.random.default_rng(6)
    shape = [3, 2, 4]
    n = 24
    mat = rng.standard_normal((n, n))
    A = full_to_tt_operator(FullOperator(shape, shape, mat), 0.0)
    v = random_tt(shape, [2, 3], rng)
    w = tt_apply(A, v)
    # rank bound: product of operator and vector ranks at each bond
    for rw, ra, rv in zip(w.ranks, A.ranks, v.ranks):
        assert rw == ra * rv
    np.testing.assert_allclose(
        w.densify().data, mat @ v.densify().data, atol=1e-9
    )


def test_operator_roundtrip_and_transpose():
    rng = np.random.default_rng(7)
    shape = [2, 3, 2]
    mat = rng.standard_normal((12, 12))
    A = full_to_tt_operator(FullOperator(shape, shape, mat), 0.0)
    np.testing.assert_allclose(A.densify().matrix, mat, atol=1e-11)
    np.testing.assert_allclose(A.transpose().densify().matrix, mat.T, atol=1e-11)


def test_operator_identity_and_arithmetic():
    shape = [3, 2, 2]
    I = TTOperator.identity(shape)
    assert np.array_equal(I.densify().matrix, np.eye(12))
    shifted = tt_op_add(I, tt_op_scale(-0.5, I))
    np.testing.assert_allclose(shifted.densify().matrix, 0.5 * np.eye(12), atol=1e-14)


def test_operator_rounding():
    rng = np.random.default_rng(8)
    shape = [3, 3]
    low_rank = rng.standard_normal((9, 2)) @ rng.standard_normal((2, 9))
    A = full_to_tt_operator(FullOperator(shape, shape, low_rank), 0.0)
    B = tt_round_operator(tt_op_add(A, A), 1e-12)
    assert all(rb <= ra + 1 for rb, ra in zip(B.ranks, A.ranks))
    np.testing.assert_allclose(B.densify().matrix, 2 * low_rank, atol=1e-10)


def test_cp_to_tt_is_exact_with_cp_rank_bonds():
    rng = np.random.default_rng(9)
    shape = [3, 2, 4]
    v = CPTensor(
        shape, [[rng.standard_normal(k) for k in shape] for _ in range(3)]
    )
    w = cp_to_tt(v)
    assert w.ranks == [1, 3, 3, 1]
    np.testing.assert_allclose(w.densify().data, v.densify().data, atol=1e-12)


def test_cp_op_to_tt_is_exact():
    rng = np.random.default_rng(10)
    shape = [2, 3]
    op = CPOperator(
        shape,
        shape,
        [[rng.standard_normal((k, k)) for k in shape] for _ in range(2)],
    )
    w = cp_op_to_tt(op)
    assert w.ranks == [1, 2, 1]
    np.testing.assert_allclose(w.densify().matrix, op.densify().matrix, atol=1e-12)


def test_format_homomorphism_add_then_densify():
    rng = np.random.default_rng(11)
    a = random_tt([3, 3, 3], [2, 2], rng)
    b = random_tt([3, 3, 3], [2, 2], rng)
    lhs = tt_add(a, b).densify().data
    rhs = a.densify().data + b.densify().data
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_dump_load_roundtrip_vector_and_operator():
    rng = np.random.default_rng(12)
    v = random_tt([3, 4, 2], [2, 3], rng)
    buf = io.BytesIO()
    tt_dump(v, buf)
    buf.seek(0)
    w = tt_load(buf)
    assert isinstance(w, TTVector)
    assert all(np.array_equal(a, b) for a, b in zip(v.cores, w.cores))

    A = full_to_tt_operator(
        FullOperator([2, 2], [2, 2], rng.standard_normal((4, 4))), 0.0
    )
    buf = io.BytesIO()
    tt_dump(A, buf)
    buf.seek(0)
    B = tt_load(buf)
    assert isinstance(B, TTOperator)
    assert np.array_equal(A.densify().matrix, B.densify().matrix)


def test_unit_vector():
    e = TTVector.unit([3, 2, 2], (2, 1, 2))
    dense = e.densify()
    assert dense[(2, 1, 2)] == 1.0
    assert np.sum(np.abs(dense.data)) == 1.0
