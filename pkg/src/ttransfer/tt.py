"""Tensor-train (matrix product) format: vectors, operators, and rounding."""

from __future__ import annotations

import struct

import numpy as np

from .cp import CPOperator, CPTensor, _check_guard
from .errors import DimensionMismatchError, TtransferError
from .full import FullOperator, FullTensor
from .indexing import ModeShape


class TTVector:
    """Tensor in train format; cores[mu] has shape (rho_mu, k_mu, rho_{mu+1})."""

    def __init__(self, cores):
        cores = [np.asarray(c, dtype=np.float64) for c in cores]
        if not cores:
            raise DimensionMismatchError("a TT vector needs at least one core")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise DimensionMismatchError("boundary ranks rho_0 and rho_d must be 1")
        for mu in range(len(cores) - 1):
            if cores[mu].shape[2] != cores[mu + 1].shape[0]:
                raise DimensionMismatchError(
                    f"rank mismatch between cores {mu} and {mu + 1}"
                )
        self.cores = cores

    @property
    def shape(self) -> ModeShape:
        return ModeShape([c.shape[1] for c in self.cores])

    @property
    def ranks(self) -> list[int]:
        return [c.shape[0] for c in self.cores] + [1]

    @property
    def ndim(self) -> int:
        return len(self.cores)

    @classmethod
    def zero(cls, shape) -> "TTVector":
        shape = shape if isinstance(shape, ModeShape) else ModeShape(shape)
        return cls([np.zeros((1, k, 1)) for k in shape.sizes])

    @classmethod
    def unit(cls, shape, i) -> "TTVector":
        shape = shape if isinstance(shape, ModeShape) else ModeShape(shape)
        cores = []
        for k, c in zip(shape.sizes, i):
            core = np.zeros((1, k, 1))
            core[0, c - 1, 0] = 1.0
            cores.append(core)
        return cls(cores)

    @classmethod
    def random_rank_one(cls, shape, rng: np.random.Generator) -> "TTVector":
        shape = shape if isinstance(shape, ModeShape) else ModeShape(shape)
        return cls([rng.standard_normal((1, k, 1)) for k in shape.sizes])

    def entry(self, i) -> float:
        """Evaluate one entry as the matrix product of core slices (1-based i)."""
        out = np.ones((1, 1))
        for core, c in zip(self.cores, i):
            out = out @ core[:, c - 1, :]
        return float(out[0, 0])

    def copy(self) -> "TTVector":
        return TTVector([c.copy() for c in self.cores])

    def densify(self) -> FullTensor:
        _check_guard(self.shape.total())
        out = self.cores[0][0]  # (k_1, rho_1)
        for core in self.cores[1:]:
            out = np.tensordot(out, core, axes=(out.ndim - 1, 0))
        return FullTensor.from_array(np.squeeze(out, axis=out.ndim - 1))

    def __repr__(self):
        return f"TTVector(shape={self.shape.sizes}, ranks={self.ranks})"


class TTOperator:
    """Operator in train format; cores[mu] has shape (rho, k_row, k_col, rho')."""

    def __init__(self, cores):
        cores = [np.asarray(c, dtype=np.float64) for c in cores]
        if not cores:
            raise DimensionMismatchError("a TT operator needs at least one core")
        if cores[0].shape[0] != 1 or cores[-1].shape[3] != 1:
            raise DimensionMismatchError("boundary ranks rho_0 and rho_d must be 1")
        for mu in range(len(cores) - 1):
            if cores[mu].shape[3] != cores[mu + 1].shape[0]:
                raise DimensionMismatchError(
                    f"rank mismatch between cores {mu} and {mu + 1}"
                )
        self.cores = cores

    @property
    def row_shape(self) -> ModeShape:
        return ModeShape([c.shape[1] for c in self.cores])

    @property
    def col_shape(self) -> ModeShape:
        return ModeShape([c.shape[2] for c in self.cores])

    @property
    def ranks(self) -> list[int]:
        return [c.shape[0] for c in self.cores] + [1]

    @property
    def ndim(self) -> int:
        return len(self.cores)

    @classmethod
    def identity(cls, shape) -> "TTOperator":
        shape = shape if isinstance(shape, ModeShape) else ModeShape(shape)
        return cls([np.eye(k).reshape(1, k, k, 1) for k in shape.sizes])

    def transpose(self) -> "TTOperator":
        return TTOperator([np.swapaxes(c, 1, 2) for c in self.cores])

    def copy(self) -> "TTOperator":
        return TTOperator([c.copy() for c in self.cores])

    def as_vector(self) -> TTVector:
        """Merge the (row, col) mode pairs so vector machinery applies."""
        return TTVector(
            [c.reshape(c.shape[0], c.shape[1] * c.shape[2], c.shape[3]) for c in self.cores]
        )

    @classmethod
    def from_vector(cls, v: TTVector, row_shape, col_shape) -> "TTOperator":
        row_shape = row_shape if isinstance(row_shape, ModeShape) else ModeShape(row_shape)
        col_shape = col_shape if isinstance(col_shape, ModeShape) else ModeShape(col_shape)
        cores = []
        for core, kr, kc in zip(v.cores, row_shape.sizes, col_shape.sizes):
            cores.append(core.reshape(core.shape[0], kr, kc, core.shape[2]))
        return cls(cores)

    def densify(self) -> FullOperator:
        row_total = self.row_shape.total()
        col_total = self.col_shape.total()
        _check_guard(row_total * col_total)
        out = self.cores[0][0]  # (k_row, k_col, rho)
        rows, cols = [out.shape[0]], [out.shape[1]]
        for core in self.cores[1:]:
            out = np.tensordot(out, core, axes=(out.ndim - 1, 0))
            rows.append(core.shape[1])
            cols.append(core.shape[2])
        out = np.squeeze(out, axis=out.ndim - 1)
        # axes are (i_1, j_1, i_2, j_2, ...); group rows and columns, then
        # flatten each group first-index-fastest
        d = len(rows)
        out = out.transpose(list(range(0, 2 * d, 2)) + list(range(1, 2 * d, 2)))
        mat = out.reshape(int(np.prod(rows)), int(np.prod(cols)), order="F")
        return FullOperator(self.row_shape, self.col_shape, np.ascontiguousarray(mat))

    def __repr__(self):
        return (
            f"TTOperator(row_shape={self.row_shape.sizes}, "
            f"col_shape={self.col_shape.sizes}, ranks={self.ranks})"
        )


def tt_add(v: TTVector, w: TTVector) -> TTVector:
    """Block-diagonal core concatenation; ranks add."""
    if v.shape != w.shape:
        raise DimensionMismatchError(
            f"tt_add shapes differ: {v.shape.sizes} vs {w.shape.sizes}"
        )
    d = v.ndim
    if d == 1:
        return TTVector([v.cores[0] + w.cores[0]])
    cores = []
    for mu in range(d):
        a, b = v.cores[mu], w.cores[mu]
        ra0, k, ra1 = a.shape
        rb0, _, rb1 = b.shape
        if mu == 0:
            core = np.concatenate([a, b], axis=2)
        elif mu == d - 1:
            core = np.concatenate([a, b], axis=0)
        else:
            core = np.zeros((ra0 + rb0, k, ra1 + rb1))
            core[:ra0, :, :ra1] = a
            core[ra0:, :, ra1:] = b
        cores.append(core)
    return TTVector(cores)


def tt_scale(alpha: float, v: TTVector) -> TTVector:
    cores = [v.cores[0] * alpha] + [c.copy() for c in v.cores[1:]]
    return TTVector(cores)


def tt_inner(v: TTVector, w: TTVector) -> float:
    if v.shape != w.shape:
        raise DimensionMismatchError(
            f"tt_inner shapes differ: {v.shape.sizes} vs {w.shape.sizes}"
        )
    env = np.ones((1, 1))
    for a, b in zip(v.cores, w.cores):
        env = np.einsum("ab,aic,bid->cd", env, a, b, optimize=True)
    return float(env[0, 0])


def tt_norm(v: TTVector) -> float:
    """Frobenius norm via right-to-left orthogonalization (numerically safe)."""
    cores = [c.copy() for c in v.cores]
    _orthogonalize_rl(cores)
    return float(np.linalg.norm(cores[0]))


def tt_apply(A: TTOperator, v: TTVector) -> TTVector:
    if A.col_shape != v.shape:
        raise DimensionMismatchError(
            f"operator column shape {A.col_shape.sizes} does not match "
            f"tensor shape {v.shape.sizes}"
        )
    cores = []
    for a, c in zip(A.cores, v.cores):
        ra0, ki, kj, ra1 = a.shape
        rc0, _, rc1 = c.shape
        core = np.einsum("aijb,cjd->acibd", a, c, optimize=True)
        cores.append(core.reshape(ra0 * rc0, ki, ra1 * rc1))
    return TTVector(cores)


def tt_op_add(A: TTOperator, B: TTOperator) -> TTOperator:
    if A.row_shape != B.row_shape or A.col_shape != B.col_shape:
        raise DimensionMismatchError("tt_op_add operator shapes differ")
    summed = tt_add(A.as_vector(), B.as_vector())
    return TTOperator.from_vector(summed, A.row_shape, A.col_shape)


def tt_op_scale(alpha: float, A: TTOperator) -> TTOperator:
    cores = [A.cores[0] * alpha] + [c.copy() for c in A.cores[1:]]
    return TTOperator(cores)


def _orthogonalize_rl(cores):
    """Right-to-left QR sweep; afterwards cores 2..d have orthonormal rows."""
    for mu in range(len(cores) - 1, 0, -1):
        r0, k, r1 = cores[mu].shape
        mat = cores[mu].reshape(r0, k * r1)
        q, r = np.linalg.qr(mat.T)
        rnew = q.shape[1]
        cores[mu] = q.T.reshape(rnew, k, r1)
        cores[mu - 1] = np.einsum("akb,cb->akc", cores[mu - 1], r, optimize=True)


def _rank_from_singular_values(s, delta, r_max):
    """Smallest rank whose discarded tail has norm <= delta."""
    if s.size == 0:
        return 1
    # tails[r] = ||s[r:]|| for r = 0..n
    tails = np.sqrt(np.concatenate([np.cumsum(s[::-1] ** 2)[::-1], [0.0]]))
    r = s.size
    for cand in range(1, s.size + 1):
        if tails[cand] <= delta:
            r = cand
            break
    if r_max is not None:
        r = min(r, int(r_max))
    return max(r, 1)


def tt_round(v: TTVector, eps: float, r_max: int | None = None) -> TTVector:
    """Truncate a TT vector: ||v - T(v)|| <= eps * ||v|| when r_max is None.

    Right-to-left orthogonalization followed by a left-to-right truncated SVD
    sweep with per-unfolding threshold eps * ||v|| / sqrt(d - 1).
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    cores = [c.copy() for c in v.cores]
    d = len(cores)
    if d == 1:
        return TTVector(cores)
    _orthogonalize_rl(cores)
    nrm = float(np.linalg.norm(cores[0]))
    if nrm == 0.0:
        return TTVector.zero(v.shape)
    delta = eps * nrm / np.sqrt(d - 1)
    for mu in range(d - 1):
        r0, k, r1 = cores[mu].shape
        mat = cores[mu].reshape(r0 * k, r1)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        r = _rank_from_singular_values(s, delta, r_max)
        cores[mu] = u[:, :r].reshape(r0, k, r)
        carry = s[:r, None] * vt[:r]
        cores[mu + 1] = np.einsum(
            "ab,bkc->akc", carry, cores[mu + 1], optimize=True
        )
    return TTVector(cores)


def tt_round_operator(A: TTOperator, eps: float, r_max: int | None = None) -> TTOperator:
    rounded = tt_round(A.as_vector(), eps, r_max)
    return TTOperator.from_vector(rounded, A.row_shape, A.col_shape)


def full_to_tt(v: FullTensor, eps: float, r_max: int | None = None) -> TTVector:
    """TT-SVD: successive singular value decompositions of the unfoldings."""
    arr = v.array()
    sizes = arr.shape
    d = len(sizes)
    nrm = float(np.linalg.norm(arr))
    if nrm == 0.0:
        return TTVector.zero(v.shape)
    delta = eps * nrm / np.sqrt(max(d - 1, 1))
    cores = []
    work = np.ascontiguousarray(arr)
    r = 1
    for mu in range(d - 1):
        mat = work.reshape(r * sizes[mu], -1)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        rnew = _rank_from_singular_values(s, delta, r_max)
        cores.append(u[:, :rnew].reshape(r, sizes[mu], rnew))
        work = s[:rnew, None] * vt[:rnew]
        r = rnew
    cores.append(work.reshape(r, sizes[-1], 1))
    return TTVector(cores)


def full_to_tt_operator(
    A: FullOperator, eps: float, r_max: int | None = None
) -> TTOperator:
    """TT-SVD of an operator with the (i_mu, j_mu) index pairs merged per mode."""
    rows = A.row_shape.sizes
    cols = A.col_shape.sizes
    d = len(rows)
    arr = A.matrix.reshape(rows + cols, order="F")
    perm = [ax for mu in range(d) for ax in (mu, d + mu)]
    arr = arr.transpose(perm)
    merged = arr.reshape([kr * kc for kr, kc in zip(rows, cols)])
    as_vec = full_to_tt(FullTensor.from_array(merged), eps, r_max)
    return TTOperator.from_vector(as_vec, A.row_shape, A.col_shape)


def cp_to_tt(v: CPTensor) -> TTVector:
    """Exact block-diagonal embedding; all interior ranks equal the CP rank."""
    d = v.shape.ndim
    r = v.rank
    if r == 0:
        return TTVector.zero(v.shape)
    sizes = v.shape.sizes
    if d == 1:
        core = np.zeros((1, sizes[0], 1))
        for term in v.factors:
            core[0, :, 0] += term[0]
        return TTVector([core])
    cores = []
    first = np.zeros((1, sizes[0], r))
    for l, term in enumerate(v.factors):
        first[0, :, l] = term[0]
    cores.append(first)
    for mu in range(1, d - 1):
        core = np.zeros((r, sizes[mu], r))
        for l, term in enumerate(v.factors):
            core[l, :, l] = term[mu]
        cores.append(core)
    last = np.zeros((r, sizes[-1], 1))
    for l, term in enumerate(v.factors):
        last[l, :, 0] = term[-1]
    cores.append(last)
    return TTVector(cores)


def cp_op_to_tt(A: CPOperator) -> TTOperator:
    """Operator analogue of :func:`cp_to_tt`."""
    d = A.row_shape.ndim
    r = A.rank
    rows = A.row_shape.sizes
    cols = A.col_shape.sizes
    if r == 0:
        return TTOperator(
            [np.zeros((1, kr, kc, 1)) for kr, kc in zip(rows, cols)]
        )
    if d == 1:
        core = np.zeros((1, rows[0], cols[0], 1))
        for term in A.terms:
            core[0, :, :, 0] += term[0]
        return TTOperator([core])
    cores = []
    first = np.zeros((1, rows[0], cols[0], r))
    for l, term in enumerate(A.terms):
        first[0, :, :, l] = term[0]
    cores.append(first)
    for mu in range(1, d - 1):
        core = np.zeros((r, rows[mu], cols[mu], r))
        for l, term in enumerate(A.terms):
            core[l, :, :, l] = term[mu]
        cores.append(core)
    last = np.zeros((r, rows[-1], cols[-1], 1))
    for l, term in enumerate(A.terms):
        last[l, :, :, 0] = term[-1]
    cores.append(last)
    return TTOperator(cores)


_MAGIC_VECTOR = b"TTD1"
_MAGIC_OPERATOR = b"TTO1"


def tt_dump(obj: TTVector | TTOperator, stream) -> None:
    """Serialize to the TTD1/TTO1 binary container (little-endian)."""
    if isinstance(obj, TTOperator):
        magic = _MAGIC_OPERATOR
        modes = obj.row_shape.sizes
        cores = obj.cores
    elif isinstance(obj, TTVector):
        magic = _MAGIC_VECTOR
        modes = obj.shape.sizes
        cores = obj.cores
    else:
        raise TypeError(f"cannot dump object of type {type(obj)!r}")
    d = len(cores)
    stream.write(magic)
    stream.write(struct.pack("<Q", d))
    stream.write(struct.pack(f"<{d}Q", *modes))
    stream.write(struct.pack(f"<{d + 1}Q", *obj.ranks))
    for core in cores:
        stream.write(np.ascontiguousarray(core, dtype="<f8").tobytes())


def tt_load(stream) -> TTVector | TTOperator:
    magic = stream.read(4)
    if magic not in (_MAGIC_VECTOR, _MAGIC_OPERATOR):
        raise TtransferError(f"unrecognized TT dump magic {magic!r}")
    (d,) = struct.unpack("<Q", stream.read(8))
    modes = struct.unpack(f"<{d}Q", stream.read(8 * d))
    ranks = struct.unpack(f"<{d + 1}Q", stream.read(8 * (d + 1)))
    cores = []
    for mu in range(d):
        if magic == _MAGIC_VECTOR:
            shape = (ranks[mu], modes[mu], ranks[mu + 1])
        else:
            shape = (ranks[mu], modes[mu], modes[mu], ranks[mu + 1])
        count = int(np.prod(shape))
        buf = stream.read(8 * count)
        cores.append(np.frombuffer(buf, dtype="<f8").reshape(shape).copy())
    if magic == _MAGIC_VECTOR:
        return TTVector(cores)
    return TTOperator(cores)
