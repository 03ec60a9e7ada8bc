"""Run the replicated simulation benchmark and print prediction/imputation tables.

    python3 scripts/reproduce_tables.py --config scripts/configs/desk_tables.json --out results/tables
"""
import argparse
import logging
from pathlib import Path

from bidifac.benchmark import PRED_COMPONENTS, BenchmarkConfig, run_benchmark, write_outputs


def print_tables(table, cfg):
    rows = {row[:5]: row[5:] for row in table}
    kinds = [k for k in ("cells", "columns", "rows") if k in cfg.missing]
    for design in cfg.designs:
        print(f"\n== {design} ==")
        header = ["snr", "model", *PRED_COMPONENTS, *kinds]
        print("  ".join(f"{h:>8}" for h in header))
        for snr in cfg.snrs:
            for model in cfg.models:
                cells = [f"{snr!s:>8}", f"{model:>8}"]
                for comp in PRED_COMPONENTS:
                    mean, _ = rows.get((design, snr, model, "PredErr", comp), (None, None))
                    cells.append(f"{mean:8.3f}" if mean is not None else f"{'-':>8}")
                for kind in kinds:
                    mean, _ = rows.get((design, snr, model, "ImputeErr", kind), (None, None))
                    cells.append(f"{mean:8.3f}" if mean is not None else f"{'':>8}")
                print("  ".join(cells))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=Path(__file__).parent / "configs" / "desk_tables.json")
    ap.add_argument("--out", type=Path, default=Path("results/tables"))
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--replicates", type=int, default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    cfg = BenchmarkConfig.load(args.config)
    if args.replicates is not None:
        cfg.replicates = args.replicates
    result = run_benchmark(cfg, args.threads)
    paths = write_outputs(result, args.out)
    print_tables(result["table"], cfg)
    print(f"\nsummary: {paths['table']}  series: {paths['series']}  failures: {len(result['failures'])}")


if __name__ == "__main__":
    main()
