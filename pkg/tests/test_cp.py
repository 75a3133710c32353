"""CP (r-term) format: construction, arithmetic, densification oracles."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ttransfer.cp import (
    CPOperator,
    CPTensor,
    cp_add,
    cp_apply,
    cp_inner,
    cp_scale,
)
from ttransfer.errors import CapacityError, DimensionMismatchError
from ttransfer.full import apply, inner


def random_cp(shape, rank, rng):
    return CPTensor(
        shape, [[rng.standard_normal(k) for k in shape] for _ in range(rank)]
    )


def densify_oracle(v):
    """Entrywise densification oracle: loop over all multi-indices."""
    sizes = v.shape.sizes
    out = np.zeros(sizes)
    for idx in np.ndindex(*sizes):
        s = 0.0
        for term in v.factors:
            prod = 1.0
            for mu, f in enumerate(term):
                prod *= f[idx[mu]]
            s += prod
        out[idx] = s
    return out


def test_densify_matches_entrywise_oracle():
    rng = np.random.default_rng(0)
    v = random_cp([3, 4, 2], 5, rng)
    np.testing.assert_allclose(
        v.densify().array(), densify_oracle(v), atol=1e-13
    )


def test_elementary_tensor():
    vecs = [np.eye(3)[1], np.eye(2)[0], np.eye(4)[2]]
    e = CPTensor.elementary(vecs)
    dense = e.densify()
    assert dense[(2, 1, 3)] == 1.0
    assert np.sum(dense.data) == 1.0
    assert e.rank == 1


def test_add_concatenates_terms():
    rng = np.random.default_rng(1)
    a = random_cp([3, 3], 2, rng)
    b = random_cp([3, 3], 3, rng)
    c = cp_add(a, b)
    assert c.rank == 5
    np.testing.assert_allclose(
        c.densify().data, a.densify().data + b.densify().data, atol=1e-13
    )
    with pytest.raises(DimensionMismatchError):
        cp_add(a, random_cp([3, 4], 1, rng))


def test_scale_preserves_rank():
    rng = np.random.default_rng(2)
    v = random_cp([2, 5], 3, rng)
    w = cp_scale(-2.5, v)
    assert w.rank == 3
    np.testing.assert_allclose(w.densify().data, -2.5 * v.densify().data, atol=1e-13)


def test_inner_matches_dense():
    rng = np.random.default_rng(3)
    a = random_cp([3, 2, 2], 2, rng)
    b = random_cp([3, 2, 2], 4, rng)
    assert cp_inner(a, b) == pytest.approx(
        inner(a.densify(), b.densify()), rel=1e-12
    )


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=4), st.integers(min_value=1, max_value=3))
def test_apply_rank_bound_and_value(r_a, r_v):
    rng = np.random.default_rng(r_a * 10 + r_v)
    shape = [3, 2]
    op = CPOperator(
        shape,
        shape,
        [[rng.standard_normal((k, k)) for k in shape] for _ in range(r_a)],
    )
    v = random_cp(shape, r_v, rng)
    w = cp_apply(op, v)
    assert w.rank == r_a * r_v
    np.testing.assert_allclose(
        w.densify().data,
        apply(op.densify(), v.densify()).data,
        atol=1e-11,
    )


def test_operator_densify_matches_kron_oracle():
    rng = np.random.default_rng(4)
    shape = [2, 3]
    mats = [rng.standard_normal((2, 2)), rng.standard_normal((3, 3))]
    op = CPOperator(shape, shape, [mats])
    # linearization is first-index-fastest, so mode 1 is the *inner* kron factor
    expected = np.kron(mats[1], mats[0])
    np.testing.assert_allclose(op.densify().matrix, expected, atol=1e-14)


def test_identity_operator():
    op = CPOperator.identity([3, 4])
    assert np.array_equal(op.densify().matrix, np.eye(12))


def test_transpose():
    rng = np.random.default_rng(5)
    op = CPOperator(
        [2, 3],
        [2, 3],
        [[rng.standard_normal((2, 2)), rng.standard_normal((3, 3))]],
    )
    np.testing.assert_allclose(
        op.transpose().densify().matrix, op.densify().matrix.T, atol=1e-14
    )


def test_densify_guard_blocks_huge_tensors():
    v = CPTensor.elementary([np.ones(100)] * 5)
    with pytest.raises(CapacityError):
        v.densify()


def test_zero_tensor_has_rank_zero():
    z = CPTensor.zero([2, 2])
    assert z.rank == 0
    assert np.array_equal(z.densify().data, np.zeros(4))
