"""Command-line interface: ``bidifac {fit,impute,simulate,benchmark,report}``.

Exit codes: 0 success, 1 parse error, 2 dimension mismatch, 3 no
convergence under ``--strict``, 4 penalty check failure under ``--strict``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import benchmark as bench
from .impute import ImputeConfig, impute
from .io import (
    DimensionError,
    Manifest,
    ParseError,
    SchemaVersionError,
    load_archive,
    save_archive,
    select_top_variable,
    write_matrix,
)
from .linked import Centering, ScaleInfo, default_penalties, preprocess, validate_penalties
from .metrics import format_variance_table, residual_diagnostics
from .simgen import SimParams, generate_design, missing_mask, replicate_rng
from .solver import SolverConfig, fit

EXIT_PARSE, EXIT_DIMS, EXIT_NOT_CONVERGED, EXIT_PENALTY = 1, 2, 3, 4

log = logging.getLogger("bidifac")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _solver_args(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--manifest", required=True, type=Path)
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--solver", choices=["issvt", "als"], default=None)
    sp.add_argument("--unifac", action="store_true", help="hold global and row-shared terms at zero")
    sp.add_argument("--strict", action="store_true", help="fail on penalty violations or non-convergence")
    sp.add_argument("--tol", type=float, default=None)
    sp.add_argument("--max-iter", type=int, default=None)
    sp.add_argument("--accelerate", action="store_true")
    sp.add_argument("--centering", choices=[c.value for c in Centering], default=None)
    sp.add_argument("--select-top-variable", type=int, default=None, metavar="N",
                    help="keep the N most variable rows of each row block")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bidifac", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _solver_args(sub.add_parser("fit", help="decompose a grid described by a manifest"))
    sp = sub.add_parser("impute", help="fill missing entries and write completed blocks")
    _solver_args(sp)
    sp.add_argument("--max-outer", type=int, default=100)

    sp = sub.add_parser("simulate", help="write a simulated grid with its ground truth")
    sp.add_argument("--design", choices=["1", "2"], default="2")
    sp.add_argument("--snr", default="1", help="a positive number or 'mixed'")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--rank", type=int, default=10)
    sp.add_argument("--row-dims", default="100,100")
    sp.add_argument("--col-dims", default="100,100")
    miss = sp.add_mutually_exclusive_group()
    miss.add_argument("--missing-cells", type=int, metavar="N")
    miss.add_argument("--missing-cols", type=int, metavar="K")
    miss.add_argument("--missing-rows", type=int, metavar="K")

    sp = sub.add_parser("benchmark", help="replicated simulation study")
    sp.add_argument("--config", type=Path, default=None, help="JSON benchmark config")
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--replicates", type=int, default=None)

    sp = sub.add_parser("report", help="summarize a decomposition archive")
    sp.add_argument("--archive", required=True, type=Path)
    sp.add_argument("--manifest", type=Path, default=None, help="data for residual diagnostics")
    sp.add_argument("--out", type=Path, default=None, help="write the report as JSON")
    return p


def _dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise _Exit(EXIT_PARSE, f"bad dimension list {text!r}") from None
    if not dims or min(dims) < 1:
        raise _Exit(EXIT_PARSE, f"bad dimension list {text!r}")
    return dims


def _load_input(args):
    manifest = Manifest.load(args.manifest)
    grid = manifest.load_grid()
    kept = None
    if args.select_top_variable is not None:
        grid, kept = select_top_variable(grid, args.select_top_variable)
    return manifest, grid, kept


def _solver_config(args, manifest: Manifest) -> SolverConfig:
    s = manifest.solver
    try:
        cfg = SolverConfig(
            rel_tol=float(s.get("rel_tol", 1e-8)),
            max_iter=int(s.get("max_iter", 500)),
            solver=s.get("name", "issvt"),
            accelerate=bool(s.get("accelerate", False)),
        )
    except ValueError as exc:
        raise _Exit(EXIT_PARSE, f"manifest solver settings: {exc}") from None
    changes = {}
    if args.solver is not None:
        changes["solver"] = args.solver
    if args.tol is not None:
        changes["rel_tol"] = args.tol
    if args.max_iter is not None:
        changes["max_iter"] = args.max_iter
    if args.accelerate:
        changes["accelerate"] = True
    try:
        return replace(cfg, **changes)
    except ValueError as exc:
        raise _Exit(EXIT_PARSE, str(exc)) from None


def _run_fit(args, force_impute: bool) -> int:
    manifest, grid, kept = _load_input(args)
    centering = args.centering or manifest.centering
    scaled, info = preprocess(grid, centering)
    scheme = manifest.penalty_scheme() or default_penalties(grid.row_dims, grid.col_dims)
    violations = validate_penalties(scheme, grid.p, grid.q)
    for v in violations:
        log.warning("penalty check: %s", v)
    if violations and args.strict:
        raise _Exit(EXIT_PENALTY, f"{len(violations)} penalty condition(s) violated")
    config = _solver_config(args, manifest)
    frozen = ("G", "R") if args.unifac else ()

    impute_report = None
    if grid.has_missing or force_impute:
        icfg = ImputeConfig(inner=config, max_outer=getattr(args, "max_outer", 100))
        completed, theta, impute_report = impute(scaled, scheme, icfg, frozen=frozen)
        report = impute_report.fit
        converged = report.converged and impute_report.converged
    else:
        theta, report = fit(scaled, scheme, config, frozen=frozen)
        completed = None
        converged = report.converged

    theta_orig = theta.scale_blocks(info.sigma_hat)
    reports = {"fit_report": report.to_dict()}
    if impute_report is not None:
        reports["imputation"] = impute_report.to_dict()
    extra = {
        "seed": args.seed if args.seed is not None else manifest.seed,
        "unifac": bool(args.unifac),
        "solver_config": {"solver": config.solver, "rel_tol": config.rel_tol,
                          "max_iter": config.max_iter, "accelerate": config.accelerate},
    }
    if kept is not None:
        extra["selected_rows"] = [k.tolist() for k in kept]
    save_archive(args.out, theta_orig, info, scheme, reports, extra)

    if completed is not None:
        # completed data on the original scale; observed entries are copied from the input
        back = completed.data.copy()
        for i in range(grid.p):
            for j in range(grid.q):
                r, c = grid.rows(i), grid.cols(j)
                back[r, c] = back[r, c] * info.sigma_hat[i, j] + info.center_offsets[i][j]
        back = np.where(grid.observed_mask(), grid.data, back)
        for i in range(grid.p):
            for j in range(grid.q):
                write_matrix(args.out / f"X{i + 1}{j + 1}_completed.csv", back[grid.rows(i), grid.cols(j)])

    print(f"solver: {report.solver}  iterations: {report.iterations}  converged: {report.converged}")
    if impute_report is not None:
        print(f"imputation: {impute_report.outer_iterations} outer iterations, "
              f"{impute_report.n_missing} missing entries, converged: {impute_report.converged}")
    print("ranks: " + "  ".join(f"{k}={v}" for k, v in report.component_ranks.items()))
    print(format_variance_table(report.variance_explained))
    if not converged:
        msg = "fit did not converge"
        if args.strict:
            raise _Exit(EXIT_NOT_CONVERGED, msg)
        log.warning(msg)
    return 0


def _run_simulate(args) -> int:
    snr = "mixed" if args.snr == "mixed" else None
    if snr is None:
        try:
            snr = float(args.snr)
        except ValueError:
            raise _Exit(EXIT_PARSE, f"bad --snr {args.snr!r}") from None
    design = f"design{args.design}"
    rng = replicate_rng(args.seed, int(args.design))
    try:
        params = SimParams(design=design, row_dims=_dims(args.row_dims), col_dims=_dims(args.col_dims),
                           total_rank=args.rank, snr=snr, seed=rng)
        grid, truth = generate_design(params)
        mask = None
        if args.missing_cells is not None:
            mask = missing_mask(grid.row_dims, grid.col_dims, "cells", args.missing_cells, seed=rng)
        elif args.missing_cols is not None:
            mask = missing_mask(grid.row_dims, grid.col_dims, "columns", args.missing_cols, seed=rng)
        elif args.missing_rows is not None:
            mask = missing_mask(grid.row_dims, grid.col_dims, "rows", args.missing_rows, seed=rng)
    except ValueError as exc:
        raise _Exit(EXIT_DIMS, str(exc)) from None

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(grid.p):
        for j in range(grid.q):
            name = f"X{i + 1}{j + 1}.csv"
            r, c = grid.rows(i), grid.cols(j)
            write_matrix(out / name, grid.data[r, c], None if mask is None else mask[r, c])
            names.append(name)
    if mask is not None:
        write_matrix(out / "mask.csv", mask.astype(float))
    Manifest(grid.p, grid.q, names, list(grid.row_dims), list(grid.col_dims),
             centering=Centering.NONE.value, seed=args.seed).save(out / "manifest.json")
    save_archive(out / "truth", truth.theta, extra={
        "design": design,
        "snr": truth.snr.tolist(),
        "sigma": truth.sigma.tolist(),
        "ranks": truth.ranks,
        "seed": args.seed,
    })
    print(f"wrote {grid.p}x{grid.q} grid to {out} (ranks {truth.ranks})")
    return 0


def _run_benchmark(args) -> int:
    try:
        cfg = bench.BenchmarkConfig.load(args.config) if args.config else bench.BenchmarkConfig()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.replicates is not None:
            cfg = replace(cfg, replicates=args.replicates)
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise _Exit(EXIT_PARSE, f"benchmark config: {exc}") from None
    result = bench.run_benchmark(cfg, args.threads)
    paths = bench.write_outputs(result, args.out)
    print(f"{len(result['table'])} summary rows -> {paths['table']}")
    if result["failures"]:
        print(f"warning: {len(result['failures'])} replicate(s) failed and were excluded", file=sys.stderr)
    return 0


def _run_report(args) -> int:
    theta, meta = load_archive(args.archive)
    out = {"fit_report": meta.get("fit_report"), "imputation": meta.get("imputation")}
    fr = meta.get("fit_report") or {}
    if fr:
        print(f"solver: {fr.get('solver')}  iterations: {fr.get('iterations')}  converged: {fr.get('converged')}")
        print("ranks: " + "  ".join(f"{k}={v}" for k, v in fr.get("component_ranks", {}).items()))
        print(format_variance_table(fr.get("variance_explained", [])))
    if args.manifest is not None and meta.get("scale"):
        manifest = Manifest.load(args.manifest)
        grid = manifest.load_grid()
        if grid.row_dims != theta.row_dims or grid.col_dims != theta.col_dims:
            raise DimensionError("manifest data do not match the archive")
        info = ScaleInfo.from_dict(meta["scale"])
        scaled, _ = preprocess(grid, info.centering_mode, sigma=info.sigma_hat)
        diag = residual_diagnostics(scaled, theta.scale_blocks(1.0 / info.sigma_hat), info)
        out["residuals"] = diag
        for d in diag:
            print(f"block {d['block']}: residual mean {d['mean']:.4g}  sd {d['sd']:.4g}  "
                  f"sigma_hat {d['sigma_hat_mad']:.4g}  ratio {d['sd_over_sigma_hat']:.3f}")
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.command == "fit":
            return _run_fit(args, force_impute=False)
        if args.command == "impute":
            return _run_fit(args, force_impute=True)
        if args.command == "simulate":
            return _run_simulate(args)
        if args.command == "benchmark":
            return _run_benchmark(args)
        return _run_report(args)
    except _Exit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ParseError, SchemaVersionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DimensionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMS


if __name__ == "__main__":
    sys.exit(main())
