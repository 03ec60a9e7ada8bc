"""Replicated simulation benchmark: prediction and imputation errors per design, SNR and model."""
from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .impute import ImputeConfig, impute
from .linked import BlockGrid, Centering, default_penalties, preprocess
from .metrics import impute_err, pred_err
from .simgen import SimParams, generate_design, missing_mask, replicate_rng
from .solver import Decomposition, SolverConfig, fit, unifac_fit

log = logging.getLogger(__name__)

MODELS = ("bidifac", "unifac", "svd_soft")
PRED_COMPONENTS = ("G", "R", "C", "I", "G+C", "R+I", "S")
MISSING_KINDS = ("cells", "columns", "rows")
TABLE_HEADER = ["design", "snr", "model", "metric", "component", "mean", "se"]
SERIES_HEADER = ["design", "snr", "model", "metric", "component", "replicate", "value"]


@dataclass
class BenchmarkConfig:
    designs: list[str] = field(default_factory=lambda: ["design1", "design2"])
    snrs: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    replicates: int = 20
    models: list[str] = field(default_factory=lambda: list(MODELS))
    # missingness scenario -> count per block; {} disables imputation
    missing: dict = field(default_factory=lambda: {"cells": 200, "columns": 2, "rows": 2})
    # SNRs at which imputation runs (None: all)
    impute_snrs: list | None = None
    row_dims: list[int] = field(default_factory=lambda: [100, 100])
    col_dims: list[int] = field(default_factory=lambda: [100, 100])
    total_rank: int = 10
    seed: int = 0
    rel_tol: float = 1e-8
    max_iter: int = 500
    accelerate: bool = False

    def __post_init__(self):
        if self.replicates < 0:
            raise ValueError("replicates must be nonnegative")
        for m in self.models:
            if m not in MODELS:
                raise ValueError(f"unknown model {m!r}")
        for k in self.missing:
            if k not in MISSING_KINDS:
                raise ValueError(f"unknown missingness kind {k!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown benchmark keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "BenchmarkConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def solver_config(self) -> SolverConfig:
        return SolverConfig(rel_tol=self.rel_tol, max_iter=self.max_iter, accelerate=self.accelerate)


def _snr_key(snr) -> int:
    return 0 if snr == "mixed" else int(round(float(snr) * 1000))


def _design_key(design: str) -> int:
    return {"design1": 1, "design2": 2}[design]


def _component_blocks(theta: Decomposition, comp: str) -> list[list[np.ndarray]]:
    parts = comp.split("+")
    return [
        [sum(theta.block(k, i, j) for k in parts) for j in range(theta.q)]
        for i in range(theta.p)
    ]


def _fit_model(model: str, grid: BlockGrid, solver: SolverConfig):
    """Scale by the MAD noise estimate, fit, and return components on the data scale."""
    scaled, info = preprocess(grid, Centering.NONE)
    scheme = default_penalties(grid.row_dims, grid.col_dims)
    if model == "bidifac":
        if grid.has_missing:
            _, theta, _ = impute(scaled, scheme, ImputeConfig(inner=solver))
        else:
            theta, _ = fit(scaled, scheme, solver)
    elif model == "unifac":
        # nothing couples the column blocks once G and R are fixed at zero
        if grid.has_missing:
            _, theta, _ = impute(scaled, scheme, ImputeConfig(inner=solver), frozen=("G", "R"))
        else:
            theta, _ = unifac_fit(scaled, scheme, solver)
    elif model == "svd_soft":
        theta = Decomposition.zeros(grid.row_dims, grid.col_dims)
        for i in range(grid.p):
            for j in range(grid.q):
                r, c = grid.rows(i), grid.cols(j)
                sub = BlockGrid(scaled.data[r, c], (grid.row_dims[i],), (grid.col_dims[j],),
                                None if scaled.mask is None else scaled.mask[r, c])
                sub_scheme = default_penalties(sub.row_dims, sub.col_dims)
                if sub.has_missing:
                    _, t, _ = impute(sub, sub_scheme, ImputeConfig(inner=solver))
                else:
                    t, _ = fit(sub, sub_scheme, solver)
                theta.I[i][j] = t.block("S", 0, 0)
    else:
        raise ValueError(f"unknown model {model!r}")
    return theta.scale_blocks(info.sigma_hat)


def run_replicate(cfg: BenchmarkConfig, design: str, snr, rep: int) -> list[tuple]:
    """All metric values for one replicate, as series rows."""
    rng = replicate_rng(cfg.seed, _design_key(design), _snr_key(snr), rep)
    params = SimParams(
        design=design,
        row_dims=tuple(cfg.row_dims),
        col_dims=tuple(cfg.col_dims),
        total_rank=cfg.total_rank,
        snr=snr,
        seed=rng,
    )
    grid, truth = generate_design(params)
    solver = cfg.solver_config()
    rows = []
    for model in cfg.models:
        est = _fit_model(model, grid, solver)
        for comp in PRED_COMPONENTS:
            val = pred_err(_component_blocks(truth.theta, comp), _component_blocks(est, comp))
            rows.append((design, snr, model, "PredErr", comp, rep, val))
    if cfg.impute_snrs is None or snr in cfg.impute_snrs:
        true_s = _component_blocks(truth.theta, "S")
        for kind in MISSING_KINDS:
            if kind not in cfg.missing:
                continue
            mask = missing_mask(grid.row_dims, grid.col_dims, kind, int(cfg.missing[kind]), seed=rng)
            masked = grid.with_data(grid.data, mask)
            miss = [[~mask[grid.rows(i), grid.cols(j)] for j in range(grid.q)] for i in range(grid.p)]
            for model in cfg.models:
                est = _fit_model(model, masked, solver)
                val = impute_err(true_s, _component_blocks(est, "S"), miss)
                rows.append((design, snr, model, "ImputeErr", kind, rep, val))
    return rows


def _task(args):
    cfg_dict, design, snr, rep = args
    cfg = BenchmarkConfig.from_dict(cfg_dict)
    try:
        return (design, snr, rep), run_replicate(cfg, design, snr, rep), None
    except Exception as exc:  # recorded, excluded from the summary
        return (design, snr, rep), [], f"{type(exc).__name__}: {exc}"


def run_benchmark(cfg: BenchmarkConfig, threads: int | None = None) -> dict:
    """Run every (design, snr, replicate) task; results do not depend on ``threads``."""
    if threads is None:
        threads = int(os.environ.get("BIDIFAC_THREADS", "1"))
    threads = max(1, threads)
    tasks = [
        (asdict(cfg), design, snr, rep)
        for design in cfg.designs
        for snr in cfg.snrs
        for rep in range(cfg.replicates)
    ]
    if threads == 1 or len(tasks) <= 1:
        results = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_task, tasks))
    results.sort(key=lambda r: (cfg.designs.index(r[0][0]), cfg.snrs.index(r[0][1]), r[0][2]))
    series, failures = [], []
    for key, rows, err in results:
        if err is not None:
            failures.append({"design": key[0], "snr": key[1], "replicate": key[2], "error": err})
        series.extend(rows)
    if failures:
        log.warning("%d replicate(s) failed and were excluded", len(failures))
    return {"series": series, "table": summarize(series), "failures": failures}


def summarize(series: list[tuple]) -> list[tuple]:
    """Mean and standard error per cell; undefined values are skipped."""
    groups: dict[tuple, list[float]] = {}
    for design, snr, model, metric, comp, _, val in series:
        groups.setdefault((design, snr, model, metric, comp), [])
        if val is not None:
            groups[(design, snr, model, metric, comp)].append(val)
    table = []
    for key, vals in groups.items():
        if not vals:
            table.append((*key, None, None))
            continue
        arr = np.asarray(vals)
        se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else None
        table.append((*key, float(arr.mean()), se))
    return table


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_outputs(result: dict, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"table": out / "summary.csv", "series": out / "series.csv", "failures": out / "failures.json"}
    with paths["table"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for row in result["table"]:
            w.writerow([_fmt(v) for v in row])
    with paths["series"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for row in result["series"]:
            w.writerow([_fmt(v) for v in row])
    paths["failures"].write_text(json.dumps(result["failures"], indent=2) + "\n")
    return paths


def lookup(table: list[tuple], design: str, snr, model: str, metric: str, component: str):
    for row in table:
        if row[:5] == (design, snr, model, metric, component):
            return row[5]
    raise KeyError((design, snr, model, metric, component))
