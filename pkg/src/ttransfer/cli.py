"""Experiment driver: simulate, assemble, solve, and compare from the shell.

Exit codes: 0 on success, 2 for configuration problems, 3 for numerical
failures (divergent trajectories or non-convergent solves).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__, edmd, eigsolve, full, tt, ulam
from .config import ExperimentConfig, apply_overrides, load_config
from .dynamics import (
    SdeSystem,
    SeededRng,
    analytic_invariant_density,
    potential_by_name,
)
from .errors import ConfigError, DivergenceError, SolverError, TtransferError
from .full import FullTensor, tensor_from_csv, tensor_to_csv


def _build_system(cfg: ExperimentConfig) -> SdeSystem:
    sysc = cfg.system
    params = {"alpha": sysc.alpha} if sysc.potential == "double_well" else {}
    try:
        pot = potential_by_name(sysc.potential, **params)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    return SdeSystem(pot, sysc.sigma, sysc.h, sysc.steps)


def _build_grid(cfg: ExperimentConfig) -> ulam.BoxGrid:
    dom = cfg.discretization.domain
    lower = dom[0::2]
    upper = dom[1::2]
    boxes = cfg.discretization.boxes
    if len(boxes) != len(lower):
        raise ConfigError(
            f"discretization.boxes has {len(boxes)} entries for a "
            f"{len(lower)}-dimensional domain"
        )
    return ulam.BoxGrid(lower, upper, boxes)


def _eig_config(cfg: ExperimentConfig) -> eigsolve.EigConfig:
    s = cfg.solver
    return eigsolve.EigConfig(
        theta=s.theta,
        eps=s.eps,
        rank_cap=s.rank_cap or None,
        max_iters=s.max_iters,
        tol=s.tol,
        seed=cfg.system.seed,
    )


def emit_grid_function(xi, grid_or_basis, stream=None, grid=None):
    """Write eigenfunction values at box centers as a multi-index CSV.

    With a BoxGrid, xi holds one coefficient per box and is written directly.
    With a TensorBasis, xi holds dictionary coefficients and the function is
    evaluated at the centers of the companion grid.
    """
    if isinstance(grid_or_basis, ulam.BoxGrid):
        if isinstance(xi, tt.TTVector):
            xi = xi.densify()
        elif not isinstance(xi, FullTensor):
            xi = FullTensor(grid_or_basis.shape, np.asarray(xi, dtype=np.float64))
        return tensor_to_csv(xi, stream)
    basis = grid_or_basis
    if grid is None:
        raise ConfigError("evaluating a basis expansion needs a grid of centers")
    vals = edmd.eval_eigenfunction(xi, basis, grid.centers())
    return tensor_to_csv(FullTensor(grid.shape, vals), stream)


def _load_vector_csv(path) -> FullTensor:
    with open(path) as fh:
        return tensor_from_csv(fh)


def compare_runs(vec_a: FullTensor, vec_b: FullTensor, density=None, grid=None):
    """Per-box l2 error e = (1/k) ||v_a - v_b||_2 after sign alignment.

    Both vectors are normalized to unit norm first; with a configured
    analytic density the same error against mu_inv at the box centers is
    reported as well.
    """
    if vec_a.shape != vec_b.shape:
        raise TtransferError(
            f"eigenvector shapes differ: {vec_a.shape.sizes} vs {vec_b.shape.sizes}"
        )
    k = vec_a.shape.total()

    def unit(v):
        nrm = np.linalg.norm(v)
        return v / nrm if nrm > 0 else v

    a = unit(vec_a.data)
    b = unit(vec_b.data)
    if np.dot(a, b) < 0:
        b = -b
    report = {"error": float(np.linalg.norm(a - b) / k), "k": k}
    if density is not None and grid is not None:
        mu = unit(density(grid.centers()))
        for name, v in (("a", a), ("b", b)):
            vv = -v if np.dot(v, mu) < 0 else v
            report[f"error_vs_density_{name}"] = float(np.linalg.norm(vv - mu) / k)
    return report


def _solve_pipeline(A, B, cfg: ExperimentConfig):
    eig_cfg = _eig_config(cfg)
    if B is None:
        return eigsolve.find_leading_eigenpairs(A, eig_cfg, cfg.solver.n_eigs)
    results = []
    found = []
    for _ in range(cfg.solver.n_eigs):
        res = eigsolve.generalized_inverse_power_iteration(A, B, eig_cfg, tuple(found))
        results.append(res)
        found.append(res.vector)
    return results


def _write_outputs(outdir: Path, cfg, results, timings, extra):
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "eigenvalues.csv", "w") as fh:
        fh.write("index,eigenvalue,residual,iterations,converged\n")
        for i, r in enumerate(results, start=1):
            fh.write(
                f"{i},{r.eigenvalue:.17g},{r.residual:.17g},"
                f"{r.iterations},{int(r.converged)}\n"
            )
    manifest = {
        "config": cfg.as_dict(),
        "versions": {
            "ttransfer": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "timings_seconds": timings,
        "eigenvalues": [r.as_record() for r in results],
    }
    manifest.update(extra)
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def run_ulam(cfg: ExperimentConfig) -> dict:
    cfg.validate()
    system = _build_system(cfg)
    grid = _build_grid(cfg)
    rng = SeededRng(cfg.system.seed)
    outdir = Path(cfg.output.directory)
    timings = {}

    t0 = time.perf_counter()
    trans = ulam.assemble_tensor(grid, system, cfg.discretization.test_points, rng)
    timings["assemble"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    op = trans.to_tt(cfg.solver.eps, cfg.solver.rank_cap or None)
    timings["truncate"] = time.perf_counter() - t0
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "operator.tt", "wb") as fh:
        tt.tt_dump(op, fh)

    # invariant densities are left eigenvectors of the row-stochastic matrix
    solve_op = op.transpose() if cfg.operator == "pf" else op
    t0 = time.perf_counter()
    results = _solve_pipeline(solve_op, None, cfg)
    timings["solve"] = time.perf_counter() - t0

    for i, r in enumerate(results, start=1):
        with open(outdir / f"eigenvector_{i}.csv", "w") as fh:
            emit_grid_function(r.vector, grid, fh)
    retained = trans.retained_mass
    extra = {
        "retained_mass": {
            "min": float(retained.min()),
            "mean": float(retained.mean()),
        },
        "empty_rows": len(trans.empty_rows),
        "operator_ranks": op.ranks,
    }
    return _write_outputs(outdir, cfg, results, timings, extra)


def run_edmd(cfg: ExperimentConfig) -> dict:
    cfg.validate()
    system = _build_system(cfg)
    grid = _build_grid(cfg)
    rng = SeededRng(cfg.system.seed)
    outdir = Path(cfg.output.directory)
    timings = {}
    dom = cfg.discretization.domain
    lower, upper = dom[0::2], dom[1::2]
    intervals = list(zip(lower, upper))
    basis = edmd.TensorBasis.monomials(
        system.dim, cfg.discretization.basis_order, intervals
    )

    t0 = time.perf_counter()
    X, Y = edmd.generate_samples(
        system, lower, upper, cfg.discretization.samples, rng
    )
    timings["simulate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    dense = edmd.assemble_edmd_dense(basis, X, Y)
    timings["assemble"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if cfg.operator == "pf":
        a_mat, g_mat = edmd.pf_eigproblem_matrices(dense)
    else:
        a_mat, g_mat = edmd.koopman_eigproblem_matrices(dense)
    shape = basis.shape
    A_op = full.FullOperator(shape, shape, a_mat)
    B_op = full.FullOperator(shape, shape, g_mat)
    results = _solve_pipeline(A_op, B_op, cfg)
    timings["solve"] = time.perf_counter() - t0

    outdir.mkdir(parents=True, exist_ok=True)
    for i, r in enumerate(results, start=1):
        with open(outdir / f"eigenvector_{i}.csv", "w") as fh:
            emit_grid_function(r.vector, basis, fh, grid=grid)
    extra = {"samples": dense.m, "dictionary_size": shape.total()}
    return _write_outputs(outdir, cfg, results, timings, extra)


def run_simulate(cfg: ExperimentConfig) -> dict:
    cfg.validate()
    system = _build_system(cfg)
    rng = SeededRng(cfg.system.seed)
    outdir = Path(cfg.output.directory)
    outdir.mkdir(parents=True, exist_ok=True)
    dom = cfg.discretization.domain
    lower, upper = dom[0::2], dom[1::2]
    t0 = time.perf_counter()
    if cfg.method == "ulam":
        grid = _build_grid(cfg)
        from .dynamics import flow_map_batch

        X = ulam.sample_test_points(grid, cfg.discretization.test_points, rng)
        Y = flow_map_batch(system, X, rng, 0)
        X, Y = X.T, Y.T
    else:
        X, Y = edmd.generate_samples(
            system, lower, upper, cfg.discretization.samples, rng
        )
    elapsed = time.perf_counter() - t0
    header = ",".join(
        [f"x{i+1}" for i in range(system.dim)] + [f"y{i+1}" for i in range(system.dim)]
    )
    data = np.vstack([X, Y]).T
    with open(outdir / "samples.csv", "w") as fh:
        fh.write(header + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return {"samples": data.shape[0], "seconds": elapsed}


def _cmd_eig(args) -> int:
    with open(args.operator, "rb") as fh:
        op = tt.tt_load(fh)
    if not isinstance(op, tt.TTOperator):
        raise ConfigError(f"{args.operator} does not hold an operator dump")
    if args.transpose:
        op = op.transpose()
    cfg = eigsolve.EigConfig(theta=args.theta, tol=args.tol, eps=args.eps, seed=args.seed)
    results = eigsolve.find_leading_eigenpairs(op, cfg, args.n_eigs)
    for i, r in enumerate(results, start=1):
        print(
            f"{i}: eigenvalue={r.eigenvalue:.12g} residual={r.residual:.3g} "
            f"iterations={r.iterations} converged={r.converged}"
        )
        if args.output:
            path = Path(args.output) / f"eigenvector_{i}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w") as fh:
                tensor_to_csv(r.vector.densify(), fh)
    if not all(r.converged for r in results):
        raise SolverError("one or more eigenpairs did not converge")
    return 0


def _cmd_compare(args) -> int:
    vec_a = _load_vector_csv(args.run_a)
    vec_b = _load_vector_csv(args.run_b)
    density = grid = None
    if args.potential:
        params = {"alpha": args.alpha} if args.potential == "double_well" else {}
        pot = potential_by_name(args.potential, **params)
        density = analytic_invariant_density(pot, args.sigma)
        dom = [float(t) for t in args.domain.replace(";", ",").split(",")]
        grid = ulam.BoxGrid(dom[0::2], dom[1::2], vec_a.shape.sizes)
    report = compare_runs(vec_a, vec_b, density, grid)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_convert(args) -> int:
    src = Path(args.source)
    if args.to == "tt":
        vec = _load_vector_csv(src)
        with open(args.dest, "wb") as fh:
            tt.tt_dump(tt.full_to_tt(vec, args.eps), fh)
    else:
        with open(src, "rb") as fh:
            obj = tt.tt_load(fh)
        if isinstance(obj, tt.TTOperator):
            obj = obj.as_vector()
        with open(args.dest, "w") as fh:
            tensor_to_csv(obj.densify(), fh)
    return 0


def _add_config_args(sub):
    sub.add_argument("--config", help="experiment config file")
    sub.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override a config key (repeatable)",
    )


def _resolve_config(args, method) -> ExperimentConfig:
    cfg = load_config(open(args.config)) if args.config else ExperimentConfig()
    if method:
        cfg.method = method
    return apply_overrides(cfg, args.overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttransfer",
        description="transfer-operator experiments in low-rank tensor formats",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (
        ("simulate", "generate snapshot pairs and write them as CSV"),
        ("ulam", "run the box-discretization pipeline end to end"),
        ("edmd", "run the dictionary-based pipeline end to end"),
    ):
        sub = subs.add_parser(name, help=helptext)
        _add_config_args(sub)

    sub = subs.add_parser("eig", help="solve eigenpairs of a stored TT operator")
    sub.add_argument("operator", help="TT operator dump")
    sub.add_argument("--theta", type=float, default=0.99)
    sub.add_argument("--tol", type=float, default=1e-8)
    sub.add_argument("--eps", type=float, default=1e-10)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--n-eigs", type=int, default=1)
    sub.add_argument("--transpose", action="store_true")
    sub.add_argument("--output", help="directory for eigenvector CSVs")

    sub = subs.add_parser("compare", help="per-box error between eigenvector CSVs")
    sub.add_argument("run_a")
    sub.add_argument("run_b")
    sub.add_argument("--potential", help="also compare against exp(-2V/sigma^2)")
    sub.add_argument("--alpha", type=float, default=0.0)
    sub.add_argument("--sigma", type=float, default=0.7)
    sub.add_argument("--domain", default="-2,2,-2,2")

    sub = subs.add_parser("convert", help="convert between CSV and TT dumps")
    sub.add_argument("source")
    sub.add_argument("dest")
    sub.add_argument("--to", choices=["tt", "csv"], required=True)
    sub.add_argument("--eps", type=float, default=0.0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "simulate":
            cfg = _resolve_config(args, None)
            if not cfg.method:
                cfg.method = "ulam"
            out = run_simulate(cfg)
            print(json.dumps(out))
        elif args.command == "ulam":
            manifest = run_ulam(_resolve_config(args, "ulam"))
            print(json.dumps(manifest["eigenvalues"], indent=2))
        elif args.command == "edmd":
            manifest = run_edmd(_resolve_config(args, "edmd"))
            print(json.dumps(manifest["eigenvalues"], indent=2))
        elif args.command == "eig":
            return _cmd_eig(args)
        elif args.command == "compare":
            return _cmd_compare(args)
        elif args.command == "convert":
            return _cmd_convert(args)
        return 0
    except (ConfigError, FileNotFoundError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, DivergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
