import numpy as np
import pytest

from bidifac.benchmark import BenchmarkConfig, lookup, run_benchmark, summarize, write_outputs

SMALL = dict(designs=["design1", "design2"], snrs=[1.0], replicates=2, row_dims=[20, 20], col_dims=[20, 20],
             total_rank=3, missing={"cells": 10, "rows": 1}, seed=3)


def test_results_independent_of_threads():
    cfg = BenchmarkConfig(**SMALL)
    a = run_benchmark(cfg, threads=1)
    b = run_benchmark(cfg, threads=2)
    assert a["series"] == b["series"] and a["table"] == b["table"]
    assert not a["failures"]


def test_table_contents(tmp_path):
    cfg = BenchmarkConfig(**SMALL)
    res = run_benchmark(cfg, threads=1)
    for model in cfg.models:
        v = lookup(res["table"], "design2", 1.0, model, "PredErr", "S")
        assert 0 < v < 1.5
        assert lookup(res["table"], "design1", 1.0, model, "ImputeErr", "rows") > 0
    # design 1 has no global term: its error is undefined and shown as "-"
    assert lookup(res["table"], "design1", 1.0, "bidifac", "PredErr", "G") is None
    paths = write_outputs(res, tmp_path)
    rows = paths["table"].read_text().splitlines()
    assert rows[0] == "design,snr,model,metric,component,mean,se"
    assert len(rows) == 1 + len(res["table"])


def test_summarize_mean_and_se():
    series = [("d", 1.0, "m", "PredErr", "S", k, v) for k, v in enumerate([1.0, 2.0, 3.0])]
    (row,) = summarize(series)
    assert row[5] == pytest.approx(2.0) and row[6] == pytest.approx(1.0 / np.sqrt(3))


def test_config_validation():
    with pytest.raises(ValueError):
        BenchmarkConfig(models=["jive"])
    with pytest.raises(ValueError):
        BenchmarkConfig.from_dict({"replicate": 3})
