"""Tensor-product dictionaries and EDMD assembly in matrix and low-rank form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cp import CPOperator, CPTensor, _check_guard, _product_vector
from .dynamics import STREAM_SAMPLES, SdeSystem, SeededRng, flow_map_batch
from .errors import (
    DegenerateDataError,
    DimensionMismatchError,
    EmptyDataError,
    EvaluationError,
)
from .full import FullOperator, FullTensor
from .indexing import ModeShape
from .tt import TTOperator, TTVector, full_to_tt_operator


@dataclass(frozen=True)
class BasisSet1D:
    """One-dimensional dictionary for a single coordinate direction.

    Monomials are evaluated after an affine rescaling of the interval to
    [-1, 1] (when an interval is given) to keep the Gram matrix tractable.
    """

    dim_index: int
    family: str
    size: int
    interval: tuple[float, float] | None = None

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Values psi^1..psi^k at the points x, as a (k, n) array."""
        x = np.asarray(x, dtype=np.float64)
        if self.family != "monomials":
            raise ValueError(f"unknown basis family {self.family!r}")
        if self.interval is not None:
            a, b = self.interval
            x = (2.0 * x - (a + b)) / (b - a)
        out = np.empty((self.size,) + x.shape)
        out[0] = 1.0
        for p in range(1, self.size):
            out[p] = out[p - 1] * x
        return out


def monomial_basis(dim_index: int, max_order: int, interval=None) -> BasisSet1D:
    if max_order < 0:
        raise ValueError("max_order must be nonnegative")
    return BasisSet1D(dim_index, "monomials", max_order + 1, interval)


@dataclass(frozen=True)
class TensorBasis:
    """Product dictionary: one BasisSet1D per dimension."""

    sets: tuple[BasisSet1D, ...]

    def __init__(self, sets):
        object.__setattr__(self, "sets", tuple(sets))

    @property
    def dim(self) -> int:
        return len(self.sets)

    @property
    def shape(self) -> ModeShape:
        return ModeShape([s.size for s in self.sets])

    @classmethod
    def monomials(cls, dim: int, max_order: int, intervals=None) -> "TensorBasis":
        if intervals is None:
            intervals = [None] * dim
        return cls(
            [monomial_basis(mu, max_order, intervals[mu]) for mu in range(dim)]
        )


def eval_psi_rank1(basis: TensorBasis, x) -> CPTensor:
    """The rank-1 tensor Psi(x) with factors psi_mu(x_mu)."""
    x = np.asarray(x, dtype=np.float64)
    factors = []
    for mu, bset in enumerate(basis.sets):
        vals = bset.evaluate(x[mu])
        if not np.all(np.isfinite(vals)):
            raise EvaluationError(
                f"basis values for dimension {mu + 1} are not finite at x={x!r}"
            )
        factors.append(vals)
    return CPTensor(basis.shape, [factors])


def basis_matrix(basis: TensorBasis, X: np.ndarray) -> np.ndarray:
    """Vectorized dictionary values, (k_hat, m) with linearized row ordering.

    Column l equals densify(eval_psi_rank1(basis, X[:, l])) computed with the
    same multiplication chain, so matrix and tensor assemblies agree exactly.
    """
    X = np.asarray(X, dtype=np.float64)
    out = np.ones((1, X.shape[1]))
    for mu, bset in enumerate(basis.sets):
        vals = bset.evaluate(X[mu])
        if not np.all(np.isfinite(vals)):
            raise EvaluationError(f"basis values for dimension {mu + 1} not finite")
        out = (vals[:, None, :] * out[None, :, :]).reshape(-1, X.shape[1])
    return out


@dataclass
class EdmdDense:
    """EDMD matrices A_hat and G_hat with the sample count."""

    basis: TensorBasis
    A: np.ndarray
    G: np.ndarray
    m: int

    @property
    def shape(self) -> ModeShape:
        return self.basis.shape


@dataclass
class EdmdCP:
    """EDMD operators as sums of per-sample elementary tensors.

    psi_x[mu] and psi_y[mu] hold the mode-mu factor vectors for all samples
    (shape (k_mu, m)); sample l contributes Psi(y_l) (x) Psi(x_l) to A and
    Psi(x_l) (x) Psi(x_l) to G.
    """

    basis: TensorBasis
    psi_x: list[np.ndarray]
    psi_y: list[np.ndarray]
    m: int

    @property
    def shape(self) -> ModeShape:
        return self.basis.shape

    def _densify(self, left: list[np.ndarray]) -> FullOperator:
        k_hat = self.shape.total()
        _check_guard(k_hat * k_hat)
        px = np.ones((1, self.m))
        py = np.ones((1, self.m))
        for vx, vy in zip(self.psi_x, left):
            px = (vx[:, None, :] * px[None, :, :]).reshape(-1, self.m)
            py = (vy[:, None, :] * py[None, :, :]).reshape(-1, self.m)
        acc = np.zeros((k_hat, k_hat))
        for l in range(self.m):
            acc += np.outer(py[:, l], px[:, l])
        return FullOperator(self.shape, self.shape, acc / self.m)

    def densify_a(self) -> FullOperator:
        return self._densify(self.psi_y)

    def densify_g(self) -> FullOperator:
        return self._densify(self.psi_x)

    def _cp_operator(self, left: list[np.ndarray]) -> CPOperator:
        terms = []
        for l in range(self.m):
            mats = [
                np.outer(vy[:, l], vx[:, l]) / (self.m if mu == 0 else 1.0)
                for mu, (vy, vx) in enumerate(zip(left, self.psi_x))
            ]
            terms.append(mats)
        return CPOperator(self.shape, self.shape, terms)

    def cp_a(self) -> CPOperator:
        return self._cp_operator(self.psi_y)

    def cp_g(self) -> CPOperator:
        return self._cp_operator(self.psi_x)

    def tt_a(self, eps: float = 0.0, r_max: int | None = None) -> TTOperator:
        return full_to_tt_operator(self.densify_a(), eps, r_max)

    def tt_g(self, eps: float = 0.0, r_max: int | None = None) -> TTOperator:
        return full_to_tt_operator(self.densify_g(), eps, r_max)


def _check_data(basis, X, Y):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.shape != X.shape:
        raise DimensionMismatchError("X and Y must both be (d, m) arrays")
    if X.shape[0] != basis.dim:
        raise DimensionMismatchError(
            f"data dimension {X.shape[0]} != basis dimension {basis.dim}"
        )
    if X.shape[1] == 0:
        raise EmptyDataError("EDMD assembly needs at least one sample")
    return X, Y


def assemble_edmd_dense(basis: TensorBasis, X, Y) -> EdmdDense:
    """A_hat = (1/m) sum Psi(y_l) Psi(x_l)^T, G_hat = (1/m) sum Psi(x_l) Psi(x_l)^T."""
    X, Y = _check_data(basis, X, Y)
    m = X.shape[1]
    px = basis_matrix(basis, X)
    py = basis_matrix(basis, Y)
    k_hat = px.shape[0]
    A = np.zeros((k_hat, k_hat))
    G = np.zeros((k_hat, k_hat))
    for l in range(m):
        A += np.outer(py[:, l], px[:, l])
        G += np.outer(px[:, l], px[:, l])
    return EdmdDense(basis, A / m, G / m, m)


def assemble_edmd_cp(basis: TensorBasis, X, Y) -> EdmdCP:
    """Per-sample elementary-tensor form of the EDMD matrices."""
    X, Y = _check_data(basis, X, Y)
    psi_x = [bset.evaluate(X[mu]) for mu, bset in enumerate(basis.sets)]
    psi_y = [bset.evaluate(Y[mu]) for mu, bset in enumerate(basis.sets)]
    for mu, (vx, vy) in enumerate(zip(psi_x, psi_y)):
        if not (np.all(np.isfinite(vx)) and np.all(np.isfinite(vy))):
            raise EvaluationError(f"basis values for dimension {mu + 1} not finite")
    return EdmdCP(basis, psi_x, psi_y, X.shape[1])


def koopman_matrix(e: EdmdDense, svd_tol: float = 1e-12):
    """K_hat^T = A_hat G_hat^+ via SVD pseudoinverse.

    Returns (K_T, info) where info reports the effective rank and a condition
    estimate of G_hat.
    """
    if not np.any(e.G):
        raise DegenerateDataError("G_hat is identically zero")
    u, s, vt = np.linalg.svd(e.G)
    cutoff = svd_tol * s[0]
    rank = int(np.sum(s > cutoff))
    inv = np.zeros_like(s)
    inv[:rank] = 1.0 / s[:rank]
    g_pinv = (vt.T * inv) @ u.T
    info = {
        "effective_rank": rank,
        "condition": float(s[0] / s[rank - 1]) if rank else np.inf,
        "svd_tol": svd_tol,
    }
    return e.A @ g_pinv, info


def koopman_eigproblem_matrices(e: EdmdDense) -> tuple[np.ndarray, np.ndarray]:
    """Pencil (A_hat^T, G_hat): column form of the row problem xi A = lam xi G."""
    return e.A.T, e.G


def pf_eigproblem_matrices(e: EdmdDense) -> tuple[np.ndarray, np.ndarray]:
    """Pencil (A_hat, G_hat): column form of the row problem xi A^T = lam xi G."""
    return e.A, e.G


def eval_eigenfunction(xi, basis: TensorBasis, x) -> float | np.ndarray:
    """phi(x) = <xi, Psi(x)> for xi in full, CP, or TT form.

    x may be a single point (d,) or a batch (n, d); TT coefficients are
    contracted core by core without densifying.
    """
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != basis.dim:
        raise DimensionMismatchError(
            f"points have dimension {pts.shape[1]}, basis has {basis.dim}"
        )
    psi = [bset.evaluate(pts[:, mu]) for mu, bset in enumerate(basis.sets)]
    if isinstance(xi, TTVector):
        if xi.shape != basis.shape:
            raise DimensionMismatchError("coefficient shape does not match basis")
        env = np.ones((pts.shape[0], 1))
        for core, vals in zip(xi.cores, psi):
            contracted = np.einsum("akb,kn->nab", core, vals, optimize=True)
            env = np.einsum("na,nab->nb", env, contracted, optimize=True)
        out = env[:, 0]
    else:
        if isinstance(xi, CPTensor):
            vec = xi.densify().data
        elif isinstance(xi, FullTensor):
            vec = xi.data
        else:
            vec = np.asarray(xi, dtype=np.float64).reshape(-1)
        if vec.size != basis.shape.total():
            raise DimensionMismatchError("coefficient length does not match basis")
        full = np.ones((1, pts.shape[0]))
        for vals in psi:
            full = (vals[:, None, :] * full[None, :, :]).reshape(-1, pts.shape[0])
        out = vec @ full
    return float(out[0]) if single else out


def generate_samples(
    sys: SdeSystem, lower, upper, m: int, rng: SeededRng, batch_tag: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform sample points X over a box and their images Y under the flow map."""
    if m < 1:
        raise EmptyDataError("need at least one sample")
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    u = rng.uniform((m, sys.dim), STREAM_SAMPLES, batch_tag)
    X = lower + u * (upper - lower)
    Y = flow_map_batch(sys, X, rng, batch_tag)
    return X.T.copy(), Y.T.copy()
