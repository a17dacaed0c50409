"""
实验模块测试
"""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.bench import (
    RUN_COLUMNS,
    SUMMARY_COLUMNS,
    ExperimentConfig,
    Method,
    compute_metrics,
    run_experiment,
    run_single,
    summarize,
    write_experiment,
)
from src.config import Config
from src.exceptions import ConfigError

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"


def _small_config(**overrides):
    doc = {
        "n": 6,
        "m": 3,
        "k": 1,
        "alpha": 1.0,
        "beta": 1.0,
        "levels": [50, 2000],
        "runs": 3,
        "seed": 10,
        "methods": ["L1", "CQP"],
        "timing": False,
    }
    doc.update(overrides)
    return ExperimentConfig.from_dict(doc)


class TestComputeMetrics:
    """评价指标测试"""

    def test_exact_recovery(self):
        x = np.array([0.0, 1.0, 0.0, 1.0])
        metrics = compute_metrics(x, x, 2, 0.5)
        assert (metrics.rel_err, metrics.fp_rate, metrics.fn_rate) == (0.0, 0.0, 0.0)
        assert metrics.run_time == 0.5

    def test_rates(self):
        x_true = np.array([1.0, 1.0, 0.0, 0.0, 0.0])
        x_hat = np.array([1.0, 0.0, 0.5, 0.0, 1e-9])
        metrics = compute_metrics(x_hat, x_true, 2, 0.0)
        assert metrics.fn_rate == pytest.approx(0.5)
        assert metrics.fp_rate == pytest.approx(1.0 / 3.0)
        assert metrics.rel_err == pytest.approx((1.0 + 0.25 + 1e-18) / 2.0)

    def test_degenerate_sparsity(self):
        zero = np.zeros(3)
        metrics = compute_metrics(np.array([0.0, 0.2, 0.0]), zero, 0, 0.0)
        assert metrics.fn_rate == 0.0
        assert metrics.fp_rate == pytest.approx(1.0 / 3.0)
        assert metrics.rel_err == pytest.approx(0.04)

        full = np.ones(3)
        metrics = compute_metrics(np.array([1.0, 0.0, 1.0]), full, 3, 0.0)
        assert metrics.fp_rate == 0.0
        assert metrics.fn_rate == pytest.approx(1.0 / 3.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            compute_metrics(np.zeros(2), np.zeros(3), 0, 0.0)


class TestExperimentConfig:
    """实验配置测试"""

    def test_shipped_configs(self):
        for name in ("experiment1.json", "experiment2.json"):
            with open(CONFIG_DIR / name, encoding="utf-8") as f:
                cfg = ExperimentConfig.from_dict(json.load(f))
            assert (cfg.n, cfg.m, cfg.k, cfg.runs) == (10, 4, 2, 20)
            assert cfg.methods == (Method.L1, Method.CQP)

    def test_round_trip(self):
        cfg = _small_config()
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_invalid_configs(self):
        with pytest.raises(ConfigError, match="LASSO"):
            _small_config(methods=["L1", "LASSO"])
        with pytest.raises(ConfigError):
            _small_config(levels=[1])
        with pytest.raises(ConfigError):
            _small_config(k=7)
        with pytest.raises(ConfigError):
            _small_config(runs=0)
        with pytest.raises(ConfigError):
            _small_config(unknown=1)
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"n": 3})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict([1, 2, 3])
        with pytest.raises(ConfigError, match="rangeScale"):
            _small_config(rangeScale=0.5)

    def test_range_scale(self):
        cfg = _small_config(rangeScale=4)
        assert cfg.range_scale == 4.0
        assert cfg.to_dict()["rangeScale"] == 4.0
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
        assert "scaled by 4" in cfg.codebook_rule
        assert "scaled" not in _small_config().codebook_rule

    def test_with_settings(self, tmp_path):
        path = tmp_path / "app.yaml"
        path.write_text("lp:\n  feas_tol: 1.0e-6\n  debug: true\nsolvers:\n  support_tol: 1.0e-3\n", encoding="utf-8")
        cfg = _small_config().with_settings(Config(str(path)))
        assert cfg.lp_options == {"opt_tol": 1e-9, "feas_tol": 1e-6, "pivot_tol": 1e-9}
        assert cfg.lp_debug is True
        assert cfg.support_tol == pytest.approx(1e-3)
        assert cfg.bnb.lp_options == cfg.lp_options

        path.write_text("solvers:\n  support_tol: 0\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="support_tol"):
            _small_config().with_settings(Config(str(path)))

    def test_support_tol_reaches_metrics(self, tmp_path):
        path = tmp_path / "app.yaml"
        path.write_text("solvers:\n  support_tol: 10.0\n", encoding="utf-8")
        cfg = _small_config(runs=2).with_settings(Config(str(path)))
        runs = run_experiment(cfg).runs.dropna(subset=["fn"])
        # 阈值 10 高于所有分量，估计支撑集为空
        assert len(runs) > 0
        assert (runs["fn"] == 1.0).all()
        assert (runs["fp"] == 0.0).all()


class TestRunExperiment:
    """实验流程测试"""

    def setup_method(self):
        self.cfg = _small_config()

    def test_table_shapes_and_order(self):
        result = run_experiment(self.cfg)
        assert list(result.runs.columns) == RUN_COLUMNS
        assert list(result.summary.columns) == SUMMARY_COLUMNS
        assert len(result.runs) == 3 * 2 * 2
        assert len(result.summary) == 2 * 2

        keys = list(zip(result.runs["run"], result.runs["levels"], result.runs["method"]))
        order = {"L1": 0, "CQP": 1}
        assert keys == sorted(keys, key=lambda key: (key[0], key[1], order[key[2]]))
        assert result.runs["seed"].tolist() == [10] * 4 + [11] * 4 + [12] * 4

    def test_summary_is_consistent_with_runs(self):
        result = run_experiment(self.cfg)
        again = summarize(result.runs, self.cfg)
        pd.testing.assert_frame_equal(result.summary, again)
        cell = result.runs[(result.runs["method"] == "CQP") & (result.runs["levels"] == 2000)]
        row = result.summary[(result.summary["method"] == "CQP") & (result.summary["levels"] == 2000)].iloc[0]
        assert row["rel_err_mean"] == pytest.approx(cell["rel_err"].mean())
        assert row["fn_std"] == pytest.approx(np.std(cell["fn"].to_numpy()))

    def test_deterministic_without_timing(self):
        first = run_experiment(self.cfg)
        second = run_experiment(self.cfg)
        pd.testing.assert_frame_equal(first.runs, second.runs)
        assert (first.runs["time_s"] == 0.0).all()

    def test_parallel_matches_serial(self):
        serial = run_experiment(self.cfg, jobs=1)
        parallel = run_experiment(self.cfg, jobs=2)
        pd.testing.assert_frame_equal(serial.runs, parallel.runs)

    def test_runs_are_isolated(self):
        shifted = _small_config(seed=11)
        rows = run_single(self.cfg, 1)
        other = run_single(shifted, 0)
        for a, b in zip(rows, other):
            assert {k: v for k, v in a.items() if k != "run"} == {k: v for k, v in b.items() if k != "run"}

    def test_failures_are_recorded_as_missing(self, monkeypatch):
        from src import bench

        def broken(*args, **kwargs):
            raise bench.RecoveryError("boom")

        monkeypatch.setattr(bench, "solve_l1", broken)
        result = run_experiment(_small_config(runs=1, methods=["L1"]))
        assert result.runs["rel_err"].isna().all()
        assert result.summary["rel_err_mean"].isna().all()
        assert result.missing["levels"].tolist() == [50, 2000]
        assert result.missing["missing"].tolist() == [1, 1]
        assert result.missing["valid"].tolist() == [0, 0]

    def test_missing_cells_in_manifest(self, monkeypatch, tmp_path):
        from src import bench

        def broken(*args, **kwargs):
            raise bench.RecoveryError("boom")

        monkeypatch.setattr(bench, "solve_cqp", broken)
        manifest = write_experiment(_small_config(runs=2), tmp_path / "out")
        doc = json.loads((tmp_path / "out" / "manifest.json").read_text(encoding="utf-8"))
        assert doc["missingTotal"] == 4
        assert {(cell["method"], cell["levels"]) for cell in doc["missingCells"]} == {("CQP", 50), ("CQP", 2000)}
        assert manifest.missing == doc["missingCells"]

    def test_timing_recorded(self):
        result = run_experiment(_small_config(runs=1, timing=True))
        assert (result.runs["time_s"] > 0).all()


class TestWriteExperiment:
    """输出文件测试"""

    def test_outputs_and_manifest(self, tmp_path):
        cfg = _small_config(runs=1)
        manifest = write_experiment(cfg, tmp_path / "out")
        for path in manifest.outputs.values():
            assert Path(path).exists()

        with open(tmp_path / "out" / "summary.csv", encoding="utf-8") as f:
            header = f.readline().strip()
        assert header == ",".join(SUMMARY_COLUMNS)

        doc = json.loads((tmp_path / "out" / "manifest.json").read_text(encoding="utf-8"))
        assert doc["seeds"] == [10]
        assert doc["config"] == cfg.to_dict()
        assert "max absolute entry" in doc["codebookRange"]

    def test_byte_identical_reruns(self, tmp_path):
        cfg = _small_config(runs=2)
        write_experiment(cfg, tmp_path / "a")
        write_experiment(cfg, tmp_path / "b")
        for name in ("summary.csv", "runs.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.slow
class TestPublishedTrends:
    """两组数值实验的趋势（长时间运行）"""

    def _result(self, name):
        with open(CONFIG_DIR / name, encoding="utf-8") as f:
            cfg = ExperimentConfig.from_dict(json.load(f))
        result = run_experiment(cfg)
        return cfg, result.summary.set_index(["method", "levels"]), result.missing.set_index(["method", "levels"])

    def test_exact_magnitudes(self):
        cfg, summary, _ = self._result("experiment1.json")
        for levels in (2000, 6000):
            assert summary.loc[("CQP", levels), "rel_err_mean"] <= 1e-6
            assert summary.loc[("CQP", levels), "fn_mean"] == 0.0
            assert summary.loc[("CQP", levels), "fn_mean"] < summary.loc[("L1", levels), "fn_mean"]
        # ℓ1 的漏报来自无噪声时也失败的实例，不随量化变细而消失
        for levels in cfg.levels:
            assert summary.loc[("L1", levels), "fn_mean"] > 0.0

    def test_uncertain_magnitudes(self):
        cfg, summary, missing = self._result("experiment2.json")
        for levels in cfg.levels:
            assert summary.loc[("L1", levels), "fn_mean"] > 0.0
            assert missing.loc[("L1", levels), "missing"] == 0
            assert missing.loc[("CQP", levels), "missing"] + missing.loc[("CQP", levels), "valid"] == cfg.runs
