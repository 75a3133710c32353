"""Truncated power-iteration eigensolvers, ALS linear solves, dense oracles.

All solvers share the same convergence contract: the eigenvalue increment
must drop below tol and the (freshly recomputed) residual below 10 * tol.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .cp import CPOperator, DENSIFY_GUARD
from .dynamics import STREAM_SOLVER_INIT, SeededRng
from .errors import CapacityError, SolverError
from .full import FullOperator, FullTensor
from . import full as full_ops
from . import tt as tt_ops
from .tt import TTOperator, TTVector


@dataclass
class EigConfig:
    """Knobs shared by every iteration scheme."""

    theta: float = 0.99
    eps: float = 1e-12
    rank_cap: int | None = None
    max_iters: int = 500
    tol: float = 1e-10
    seed: int = 0
    als_sweeps: int = 6
    als_rank_extra: int = 2
    als_fail_threshold: float = 1e-2
    # 0 disables Rayleigh refinement; n > 0 re-shifts to the current
    # eigenvalue estimate from iteration n onward (cures near-tied shifts)
    rayleigh_after: int = 0


@dataclass
class EigResult:
    eigenvalue: float
    vector: TTVector | FullTensor
    residual: float
    iterations: int
    history: list = field(default_factory=list)
    converged: bool = True

    def as_record(self) -> dict:
        return {
            "eigenvalue": self.eigenvalue,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
        }


# ---------------------------------------------------------------------------
# format-generic vector operations


def _is_tt(v):
    return isinstance(v, (TTVector, TTOperator))


def _norm(v):
    return tt_ops.tt_norm(v) if _is_tt(v) else v.norm()


def _inner(v, w):
    return tt_ops.tt_inner(v, w) if _is_tt(v) else full_ops.inner(v, w)


def _scale(alpha, v):
    return tt_ops.tt_scale(alpha, v) if _is_tt(v) else full_ops.scale(alpha, v)


def _axpy(alpha, v, w):
    if _is_tt(v):
        return tt_ops.tt_add(tt_ops.tt_scale(alpha, v), w)
    return full_ops.axpy(alpha, v, w)


def _apply(A, v):
    return tt_ops.tt_apply(A, v) if _is_tt(A) else full_ops.apply(A, v)


def _truncate(v, cfg: EigConfig):
    if _is_tt(v):
        return tt_ops.tt_round(v, cfg.eps, cfg.rank_cap)
    return v


def _project_out(v, deflate, cfg: EigConfig):
    """Gram-Schmidt projection against previously found (unit) eigenvectors."""
    for u in deflate:
        v = _axpy(-_inner(u, v), u, v)
    if deflate:
        v = _truncate(v, cfg)
    return v


def _fix_sign(v):
    """Flip so the largest-magnitude entry is positive (skipped if too large)."""
    try:
        data = v.densify().data if _is_tt(v) else v.data
    except CapacityError:
        return v
    pivot = data[np.argmax(np.abs(data))]
    return _scale(-1.0, v) if pivot < 0 else v


def _normalize(v, cfg: EigConfig):
    nrm = _norm(v)
    if nrm == 0.0 or not np.isfinite(nrm):
        raise SolverError(
            "iterate vanished after truncation; increase the rank cap"
        )
    return _scale(1.0 / nrm, v)


def _initial_guess(A, cfg: EigConfig):
    gen = SeededRng(cfg.seed).stream(STREAM_SOLVER_INIT)
    if _is_tt(A):
        guess = TTVector.random_rank_one(A.col_shape, gen)
    else:
        guess = FullTensor(A.col_shape, gen.standard_normal(A.col_shape.total()))
    return _normalize(guess, cfg)


def _residual_norm(A, B, lam, v):
    """||A v - lam B v|| / ||v||, recomputed without truncation."""
    av = _apply(A, v)
    bv = v if B is None else _apply(B, v)
    return _norm(_axpy(-lam, bv, av)) / _norm(v)


def _finish(A, B, lam, v, history, iters, converged, cfg):
    v = _normalize(v, cfg)
    v = _fix_sign(v)
    res = _residual_norm(A, B, lam, v)
    return EigResult(lam, v, res, iters, history, converged)


# ---------------------------------------------------------------------------
# iteration schemes


def power_iteration(A, cfg: EigConfig, deflate=()) -> EigResult:
    """Truncated power iteration for the dominant eigenpair of A v = lam v."""
    v = _project_out(_initial_guess(A, cfg), deflate, cfg)
    v = _normalize(v, cfg)
    lam_prev = np.inf
    history = []
    for k in range(1, cfg.max_iters + 1):
        av = _truncate(_apply(A, v), cfg)
        av = _project_out(av, deflate, cfg)
        lam = _inner(v, av)
        history.append(lam)
        if abs(lam - lam_prev) <= cfg.tol * max(1.0, abs(lam)):
            res = _residual_norm(A, None, lam, _normalize(av, cfg))
            if res <= 10.0 * cfg.tol:
                return _finish(A, None, lam, av, history, k, True, cfg)
        lam_prev = lam
        v = _normalize(av, cfg)
    return _finish(A, None, lam_prev, v, history, cfg.max_iters, False, cfg)


def _dense_shifted_solver(A, B, theta):
    mat = A - theta * (np.eye(A.shape[0]) if B is None else B)
    try:
        with warnings.catch_warnings():
            # singular factorizations are detected via non-finite solves
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(mat)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise SolverError(f"shifted system is singular at theta={theta}") from exc
    return lambda rhs: scipy.linalg.lu_solve(lu, rhs)


def _shifted_tt_operator(A: TTOperator, B: TTOperator | None, theta: float):
    base = TTOperator.identity(A.col_shape) if B is None else B
    return tt_ops.tt_op_add(A, tt_ops.tt_op_scale(-theta, base))


def _inverse_iteration(A, B, cfg: EigConfig, deflate):
    """Shared core of the (generalized) inverse power iteration."""
    is_tt = _is_tt(A)
    theta = cfg.theta
    if is_tt:
        shifted = _shifted_tt_operator(A, B, theta)
        solve = None
    else:
        solve = _dense_shifted_solver(A.matrix, None if B is None else B.matrix, theta)
    v = _project_out(_initial_guess(A, cfg), deflate, cfg)
    v = _normalize(v, cfg)
    lam_prev = np.inf
    history = []
    x_prev = None
    for k in range(1, cfg.max_iters + 1):
        rhs = v if B is None else _truncate(_apply(B, v), cfg)
        if is_tt:
            ranks = _als_ranks(rhs, cfg)
            cap = max(_max_tt_ranks(rhs.shape))
            if cfg.rank_cap is not None:
                cap = min(cap, cfg.rank_cap)
            while True:
                try:
                    w, _ = als_linear_solve(
                        shifted,
                        rhs,
                        ranks=ranks,
                        sweeps=cfg.als_sweeps,
                        fail_threshold=cfg.als_fail_threshold,
                        x0=x_prev,
                    )
                    break
                except SolverError:
                    if ranks >= cap:
                        raise
                    ranks = min(2 * ranks, cap)
            x_prev = w
        else:
            w = FullTensor(v.shape, solve(rhs.data))
            if not np.all(np.isfinite(w.data)):
                # exact hit on an eigenvalue makes the factorization singular
                theta += 1e-10 * max(1.0, abs(theta))
                solve = _dense_shifted_solver(
                    A.matrix, None if B is None else B.matrix, theta
                )
                w = FullTensor(v.shape, solve(rhs.data))
        w = _project_out(w, deflate, cfg)
        v = _normalize(_truncate(w, cfg), cfg)
        num = _inner(v, _truncate(_apply(A, v), cfg))
        if B is None:
            lam = num
        else:
            den = _inner(v, _truncate(_apply(B, v), cfg))
            if abs(den) <= 1e-14 * max(1.0, abs(num)):
                raise SolverError(
                    "pairing <v, B v> is numerically zero (indefinite pencil)"
                )
            lam = num / den
        history.append(lam)
        if abs(lam - lam_prev) <= cfg.tol * max(1.0, abs(lam)):
            res = _residual_norm(A, B, lam, v)
            if res <= 10.0 * cfg.tol:
                return _finish(A, B, lam, v, history, k, True, cfg)
        if (
            cfg.rayleigh_after
            and k >= cfg.rayleigh_after
            and np.isfinite(lam)
            and abs(lam - theta) > 1e-14 * max(1.0, abs(lam))
        ):
            theta = lam
            try:
                if is_tt:
                    shifted = _shifted_tt_operator(A, B, theta)
                else:
                    solve = _dense_shifted_solver(
                        A.matrix, None if B is None else B.matrix, theta
                    )
            except SolverError:
                # shift landed exactly on an eigenvalue; nudge it
                theta += 1e-10 * max(1.0, abs(theta))
                if not is_tt:
                    solve = _dense_shifted_solver(
                        A.matrix, None if B is None else B.matrix, theta
                    )
        lam_prev = lam
    return _finish(A, B, lam_prev, v, history, cfg.max_iters, False, cfg)


def inverse_power_iteration(A, cfg: EigConfig, deflate=()) -> EigResult:
    """Inverse iteration with shift: converges to the eigenvalue nearest theta."""
    return _inverse_iteration(A, None, cfg, deflate)


def generalized_inverse_power_iteration(A, B, cfg: EigConfig, deflate=()) -> EigResult:
    """Inverse iteration for A v = lam B v with shift theta."""
    return _inverse_iteration(A, B, cfg, deflate)


def find_leading_eigenpairs(A, cfg: EigConfig, n_eigs: int, B=None) -> list[EigResult]:
    """Repeated shifted inverse iteration with Gram-Schmidt deflation."""
    results = []
    found = []
    for _ in range(n_eigs):
        res = _inverse_iteration(A, B, cfg, tuple(found))
        results.append(res)
        found.append(res.vector)
    return results


# ---------------------------------------------------------------------------
# ALS linear solver


def _max_tt_ranks(shape):
    sizes = list(shape.sizes)
    out = []
    for mu in range(1, len(sizes)):
        out.append(min(int(np.prod(sizes[:mu])), int(np.prod(sizes[mu:]))))
    return out


def _als_ranks(b: TTVector, cfg: EigConfig) -> int:
    return max(b.ranks) + cfg.als_rank_extra


def _pad_ranks(x: TTVector, target: int, gen) -> TTVector:
    """Grow bond ranks up to target with small random directions."""
    cores = [c.copy() for c in x.cores]
    caps = _max_tt_ranks(x.shape)
    scale = max(tt_ops.tt_norm(x), 1.0) * 1e-8
    for mu in range(len(cores) - 1):
        want = min(target, caps[mu])
        r = cores[mu].shape[2]
        if r >= want:
            continue
        grow = want - r
        a = cores[mu]
        b_core = cores[mu + 1]
        pad_a = gen.standard_normal((a.shape[0], a.shape[1], grow)) * scale
        pad_b = np.zeros((grow, b_core.shape[1], b_core.shape[2]))
        cores[mu] = np.concatenate([a, pad_a], axis=2)
        cores[mu + 1] = np.concatenate([b_core, pad_b], axis=0)
    return TTVector(cores)


def _als_left_env_mm(L, X, A):
    t = np.einsum("pacP,pjq->acPjq", L, X, optimize=True)
    t = np.einsum("acPjq,aijb->cPqib", t, A, optimize=True)
    t = np.einsum("cPqib,ciJe->PqbJe", t, A, optimize=True)
    return np.einsum("PqbJe,PJt->qbet", t, X, optimize=True)


def _als_left_env_mb(L, X, A, Bc):
    t = np.einsum("pas,pjq->asjq", L, X, optimize=True)
    t = np.einsum("asjq,aijb->sqib", t, A, optimize=True)
    return np.einsum("sqib,sit->qbt", t, Bc, optimize=True)


def _als_right_env_mm(R, X, A):
    t = np.einsum("qbet,PJt->qbePJ", R, X, optimize=True)
    t = np.einsum("qbePJ,ciJe->qbPci", t, A, optimize=True)
    t = np.einsum("qbPci,aijb->qPcaj", t, A, optimize=True)
    return np.einsum("qPcaj,pjq->pacP", t, X, optimize=True)


def _als_right_env_mb(R, X, A, Bc):
    t = np.einsum("qbt,sit->qbsi", R, Bc, optimize=True)
    t = np.einsum("qbsi,aijb->qsaj", t, A, optimize=True)
    return np.einsum("qsaj,pjq->pas", t, X, optimize=True)


def als_linear_solve(
    M: TTOperator,
    b: TTVector,
    ranks: int | None = None,
    sweeps: int = 6,
    fail_threshold: float = 1e-2,
    x0: TTVector | None = None,
    seed: int = 0,
) -> tuple[TTVector, dict]:
    """Fixed-rank alternating solve of min ||M x - b|| via local normal equations.

    Returns (x, info) where info carries the final relative residual and the
    bond ranks used.
    """
    if M.col_shape != b.shape:
        raise SolverError("operator and right-hand side shapes do not match")
    gen = np.random.default_rng(seed)
    if ranks is None:
        ranks = max(b.ranks) + 2
    if x0 is None:
        x = tt_ops.tt_round(b, 0.0, ranks)
    else:
        x = tt_ops.tt_round(x0, 0.0, ranks)
    x = _pad_ranks(x, ranks, gen)
    d = x.ndim
    cores = [c.copy() for c in x.cores]
    tt_ops._orthogonalize_rl(cores)

    # right environments for sites mu+1..d-1
    R_mm = [None] * (d + 1)
    R_mb = [None] * (d + 1)
    R_mm[d] = np.ones((1, 1, 1, 1))
    R_mb[d] = np.ones((1, 1, 1))
    for mu in range(d - 1, 0, -1):
        R_mm[mu] = _als_right_env_mm(R_mm[mu + 1], cores[mu], M.cores[mu])
        R_mb[mu] = _als_right_env_mb(R_mb[mu + 1], cores[mu], M.cores[mu], b.cores[mu])
    L_mm = np.ones((1, 1, 1, 1))
    L_mb = np.ones((1, 1, 1))

    b_norm = tt_ops.tt_norm(b)
    if b_norm == 0.0:
        zero = TTVector.zero(b.shape)
        return zero, {"residual": 0.0, "ranks": zero.ranks, "sweeps": 0}

    def _solve_site(mu, L_mm_c, L_mb_c, R_mm_c, R_mb_c):
        A = M.cores[mu]
        p, k, q = (
            L_mm_c.shape[0],
            A.shape[2],
            R_mm_c.shape[0],
        )
        h = np.einsum("pacP,aijb->pcPijb", L_mm_c, A, optimize=True)
        h = np.einsum("pcPijb,ciJe->pPjbJe", h, A, optimize=True)
        h = np.einsum("pPjbJe,qbet->pjqPJt", h, R_mm_c, optimize=True)
        n = p * k * q
        H = h.reshape(n, n)
        g = np.einsum("pas,aijb->psijb", L_mb_c, A, optimize=True)
        g = np.einsum("psijb,sit->pjbt", g, b.cores[mu], optimize=True)
        g = np.einsum("pjbt,qbt->pjq", g, R_mb_c, optimize=True).reshape(n)
        try:
            sol = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            ridge = 1e-12 * max(np.trace(H) / n, 1.0)
            warnings.warn("singular local ALS system; applying ridge regularization")
            sol = np.linalg.solve(H + ridge * np.eye(n), g)
        return sol.reshape(p, k, q)

    for sweep in range(sweeps):
        # left-to-right half sweep
        for mu in range(d):
            core = _solve_site(mu, L_mm, L_mb, R_mm[mu + 1], R_mb[mu + 1])
            if mu < d - 1:
                p, k, q = core.shape
                qmat, rmat = np.linalg.qr(core.reshape(p * k, q))
                cores[mu] = qmat.reshape(p, k, qmat.shape[1])
                cores[mu + 1] = np.einsum(
                    "ab,bkc->akc", rmat, cores[mu + 1], optimize=True
                )
                L_mb = _als_left_env_mb(L_mb, cores[mu], M.cores[mu], b.cores[mu])
                L_mm = _als_left_env_mm(L_mm, cores[mu], M.cores[mu])
            else:
                cores[mu] = core
        # right-to-left half sweep
        L_mm_list = [np.ones((1, 1, 1, 1))]
        L_mb_list = [np.ones((1, 1, 1))]
        for mu in range(d - 1):
            L_mm_list.append(_als_left_env_mm(L_mm_list[mu], cores[mu], M.cores[mu]))
            L_mb_list.append(
                _als_left_env_mb(L_mb_list[mu], cores[mu], M.cores[mu], b.cores[mu])
            )
        R_mm[d] = np.ones((1, 1, 1, 1))
        R_mb[d] = np.ones((1, 1, 1))
        for mu in range(d - 1, -1, -1):
            core = _solve_site(
                mu, L_mm_list[mu], L_mb_list[mu], R_mm[mu + 1], R_mb[mu + 1]
            )
            if mu > 0:
                p, k, q = core.shape
                qmat, rmat = np.linalg.qr(core.reshape(p, k * q).T)
                cores[mu] = qmat.T.reshape(qmat.shape[1], k, q)
                cores[mu - 1] = np.einsum(
                    "akb,cb->akc", cores[mu - 1], rmat, optimize=True
                )
                R_mm[mu] = _als_right_env_mm(R_mm[mu + 1], cores[mu], M.cores[mu])
                R_mb[mu] = _als_right_env_mb(
                    R_mb[mu + 1], cores[mu], M.cores[mu], b.cores[mu]
                )
            else:
                cores[mu] = core
        L_mm = np.ones((1, 1, 1, 1))
        L_mb = np.ones((1, 1, 1))

    x = TTVector(cores)
    resid_vec = tt_ops.tt_add(tt_ops.tt_apply(M, x), tt_ops.tt_scale(-1.0, b))
    residual = tt_ops.tt_norm(resid_vec) / b_norm
    if residual > fail_threshold:
        raise SolverError(
            f"ALS did not converge: relative residual {residual:.3e} "
            f"after {sweeps} sweeps at ranks {x.ranks}",
            residual=residual,
        )
    return x, {"residual": residual, "ranks": x.ranks, "sweeps": sweeps}


# ---------------------------------------------------------------------------
# dense oracle


def dense_generalized_eig(
    A, B=None, theta: float = 0.99, tol: float = 1e-12, max_iters: int = 500, seed: int = 0
) -> EigResult:
    """Shifted inverse iteration on matricized operators (oracle solver)."""
    A_op = A if isinstance(A, FullOperator) else None
    mat_a = A.matrix if isinstance(A, FullOperator) else np.asarray(A, dtype=np.float64)
    mat_b = None
    if B is not None:
        mat_b = B.matrix if isinstance(B, FullOperator) else np.asarray(B, dtype=np.float64)
    n = mat_a.shape[0]
    shape = A_op.col_shape if A_op is not None else None

    def attempt(shift):
        mat = mat_a - shift * (np.eye(n) if mat_b is None else mat_b)
        lu = scipy.linalg.lu_factor(mat)
        gen = SeededRng(seed).stream(STREAM_SOLVER_INIT)
        v = gen.standard_normal(n)
        v /= np.linalg.norm(v)
        lam_prev = np.inf
        history = []
        for k in range(1, max_iters + 1):
            rhs = v if mat_b is None else mat_b @ v
            w = scipy.linalg.lu_solve(lu, rhs)
            nw = np.linalg.norm(w)
            if not np.isfinite(nw) or nw == 0.0:
                raise SolverError("inverse iteration broke down (singular pencil)")
            v = w / nw
            num = v @ (mat_a @ v)
            den = 1.0 if mat_b is None else v @ (mat_b @ v)
            lam = num / den
            history.append(lam)
            if abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
                bv = v if mat_b is None else mat_b @ v
                res = np.linalg.norm(mat_a @ v - lam * bv)
                if res <= 10.0 * tol * max(1.0, abs(lam)):
                    pivot = v[np.argmax(np.abs(v))]
                    if pivot < 0:
                        v = -v
                    vec = FullTensor(shape, v) if shape is not None else v
                    return EigResult(lam, vec, float(res), k, history, True)
            lam_prev = lam
        pivot = v[np.argmax(np.abs(v))]
        if pivot < 0:
            v = -v
        bv = v if mat_b is None else mat_b @ v
        res = float(np.linalg.norm(mat_a @ v - lam_prev * bv))
        vec = FullTensor(shape, v) if shape is not None else v
        return EigResult(lam_prev, vec, res, max_iters, history, False)

    try:
        return attempt(theta)
    except (scipy.linalg.LinAlgError, SolverError):
        return attempt(theta + 1e-8)


def dense_spectrum_oracle(A, B=None, n_eigs: int = 3):
    """Leading real eigenpairs (by eigenvalue) of the pencil, via scipy.

    Test/acceptance plumbing: returns [(lam, unit vector), ...] sorted by
    descending real eigenvalue, discarding pairs with significant imaginary
    parts.
    """
    mat_a = A.matrix if isinstance(A, FullOperator) else np.asarray(A, dtype=np.float64)
    mat_b = None if B is None else (B.matrix if isinstance(B, FullOperator) else np.asarray(B))
    if mat_b is None:
        vals, vecs = scipy.linalg.eig(mat_a)
    else:
        vals, vecs = scipy.linalg.eig(mat_a, mat_b)
    keep = np.isfinite(vals) & (np.abs(vals.imag) <= 1e-8 * np.maximum(1.0, np.abs(vals.real)))
    vals, vecs = vals[keep].real, vecs[:, keep].real
    order = np.argsort(-vals)
    out = []
    for idx in order[:n_eigs]:
        v = vecs[:, idx]
        v = v / np.linalg.norm(v)
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        out.append((float(vals[idx]), v))
    return out


def truncate_operator(
    A: CPOperator | TTOperator | FullOperator, eps: float, r_max: int | None = None
):
    """Round an operator in TT form; reports achieved ranks and, when the
    densify guard allows, the relative truncation error."""
    if isinstance(A, CPOperator):
        tt_op = tt_ops.cp_op_to_tt(A)
    elif isinstance(A, FullOperator):
        tt_op = tt_ops.full_to_tt_operator(A, 0.0)
    else:
        tt_op = A
    rounded = tt_ops.tt_round_operator(tt_op, eps, r_max)
    info = {"ranks": rounded.ranks, "input_ranks": tt_op.ranks, "rel_error": None}
    total = rounded.row_shape.total() * rounded.col_shape.total()
    if total <= DENSIFY_GUARD:
        ref = tt_op.densify().matrix
        nrm = np.linalg.norm(ref)
        if nrm > 0:
            info["rel_error"] = float(
                np.linalg.norm(rounded.densify().matrix - ref) / nrm
            )
        else:
            info["rel_error"] = 0.0
    return rounded, info
