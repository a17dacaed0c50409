"""
实验模块

复现数值实验流程：按种子生成实例，在一组量化级数上量化，
分别用 ℓ1 基线与凹二次规划恢复，计算相对误差、误报率、漏报率与运行时间，
并对多次随机运行取平均。
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from tqdm import tqdm

from . import __version__
from .config import Config
from .exceptions import ConfigError, RecoveryError
from .models.feasible import build_polytope
from .models.instance import BoundMode, MagnitudePrior, QuantSpec, generate, quantize
from .models.solvers import (
    SUPPORT_TOL,
    BnbConfig,
    BranchRule,
    Solution,
    estimate_support,
    solve_cqp,
    solve_l1,
)
from .utils import FileUtils

RUN_COLUMNS = ["run", "seed", "method", "levels", "rel_err", "fp", "fn", "time_s"]
SUMMARY_COLUMNS = [
    "method",
    "levels",
    "rel_err_mean",
    "rel_err_std",
    "fp_mean",
    "fp_std",
    "fn_mean",
    "fn_std",
    "time_mean_s",
]


class Method(str, Enum):
    L1 = "L1"
    CQP = "CQP"


@dataclass(frozen=True)
class Metrics:
    """单次恢复的评价指标"""

    rel_err: float
    fp_rate: float
    fn_rate: float
    run_time: float


def compute_metrics(
    x_hat: Any,
    x_true: Any,
    k: int,
    run_time: float,
    d: float = 1.0,
    tol: float = SUPPORT_TOL,
) -> Metrics:
    """
    计算评价指标

    相对误差为 ‖x̂ - x̃‖²/‖x̃‖²（x̃ = 0 时取 ‖x̂‖²）；误报率以 n-k 为分母，
    漏报率以 k 为分母（k = 0 时为 0）。x̂ 的支撑集由求解器的阈值决定。

    Args:
        x_hat: 估计
        x_true: 真实向量
        k: 稀疏度
        run_time: 求解用时（秒）
        d: 区间中点，用于支撑集阈值
        tol: 支撑集相对阈值

    Returns:
        指标
    """
    x_hat = np.asarray(x_hat, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    if x_hat.shape != x_true.shape:
        raise ValueError(f"向量长度不一致: {x_hat.shape} vs {x_true.shape}")
    n = x_true.size

    energy = float(x_true @ x_true)
    err = float(np.sum((x_hat - x_true) ** 2))
    rel_err = err / energy if energy > 0 else err

    estimated = np.zeros(n, dtype=bool)
    estimated[estimate_support(x_hat, d, tol)] = True
    truth = x_true != 0

    false_pos = int(np.sum(estimated & ~truth))
    false_neg = int(np.sum(~estimated & truth))
    fp_rate = false_pos / (n - k) if n > k else 0.0
    fn_rate = false_neg / k if k > 0 else 0.0
    return Metrics(rel_err=rel_err, fp_rate=fp_rate, fn_rate=fn_rate, run_time=run_time)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    实验配置

    前半部分字段来自实验 JSON；lp_options、lp_debug 与 support_tol 来自应用配置
    （config.yaml），由 with_settings 填入，不写入实验 JSON。
    """

    n: int
    m: int
    k: int
    prior: MagnitudePrior
    levels: Tuple[int, ...]
    runs: int = 20
    seed: int = 0
    methods: Tuple[Method, ...] = (Method.L1, Method.CQP)
    bound_mode: BoundMode = BoundMode.HALF_STEP
    range_scale: float = 1.0
    abs_gap: float = 1e-8
    max_nodes: int = 1_000_000
    branch_rule: BranchRule = BranchRule.WIDEST_GAP
    timing: bool = True
    lp_options: Dict[str, Any] = field(default_factory=dict, compare=False)
    lp_debug: bool = False
    support_tol: float = SUPPORT_TOL

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs 必须不小于 1")
        if not self.levels:
            raise ConfigError("levels 不能为空")
        if any(int(L) != L or L < 2 for L in self.levels):
            raise ConfigError(f"量化级数必须是不小于 2 的整数: {list(self.levels)}")
        if not self.methods:
            raise ConfigError("methods 不能为空")
        if self.k > self.n or min(self.n, self.m) < 1 or self.k < 0:
            raise ConfigError(f"维度不合法: n={self.n}, m={self.m}, k={self.k}")
        if not (self.range_scale >= 1.0):
            raise ConfigError(f"rangeScale 必须不小于 1（否则码本饱和）: {self.range_scale}")
        if not (self.support_tol > 0):
            raise ConfigError(f"support_tol 必须为正数: {self.support_tol}")

    @property
    def bnb(self) -> BnbConfig:
        return BnbConfig(
            abs_gap=self.abs_gap,
            max_nodes=self.max_nodes,
            branch_rule=self.branch_rule,
            lp_options=self.lp_options,
        )

    @property
    def codebook_rule(self) -> str:
        rule = "max absolute entry, per dataset (A and y separately)"
        if self.range_scale != 1.0:
            rule += f", scaled by {self.range_scale:g}"
        return rule

    def with_settings(self, settings: Config) -> "ExperimentConfig":
        """用应用配置中的线性规划容差与支撑集阈值补全实验配置"""
        return replace(
            self,
            lp_options=settings.lp_options,
            lp_debug=bool(settings.get("lp.debug", False)),
            support_tol=float(settings.solver_config.get("support_tol", SUPPORT_TOL)),
        )

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "ExperimentConfig":
        """从 JSON 字典构造配置，格式错误时抛出 ConfigError"""
        if not isinstance(doc, dict):
            raise ConfigError("实验配置必须是 JSON 对象")
        known = {
            "n", "m", "k", "alpha", "beta", "levels", "runs", "seed", "methods",
            "boundMode", "rangeScale", "absGap", "maxNodes", "branchRule", "timing",
        }
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"未知的配置字段: {sorted(unknown)}")
        try:
            return cls(
                n=int(doc["n"]),
                m=int(doc["m"]),
                k=int(doc["k"]),
                prior=MagnitudePrior(float(doc["alpha"]), float(doc["beta"])),
                levels=tuple(int(L) for L in doc["levels"]),
                runs=int(doc.get("runs", 20)),
                seed=int(doc.get("seed", 0)),
                methods=tuple(Method(name) for name in doc.get("methods", ["L1", "CQP"])),
                bound_mode=BoundMode(doc.get("boundMode", BoundMode.HALF_STEP.value)),
                range_scale=float(doc.get("rangeScale", 1.0)),
                abs_gap=float(doc.get("absGap", 1e-8)),
                max_nodes=int(doc.get("maxNodes", 1_000_000)),
                branch_rule=BranchRule(doc.get("branchRule", BranchRule.WIDEST_GAP.value)),
                timing=bool(doc.get("timing", True)),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"实验配置格式错误: {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "m": self.m,
            "k": self.k,
            "alpha": self.prior.alpha,
            "beta": self.prior.beta,
            "levels": list(self.levels),
            "runs": self.runs,
            "seed": self.seed,
            "methods": [method.value for method in self.methods],
            "boundMode": self.bound_mode.value,
            "rangeScale": self.range_scale,
            "absGap": self.abs_gap,
            "maxNodes": self.max_nodes,
            "branchRule": self.branch_rule.value,
            "timing": self.timing,
        }


@dataclass
class ExperimentResult:
    """逐次运行日志与按 (方法, 量化级数) 汇总的统计表"""

    runs: pd.DataFrame
    summary: pd.DataFrame
    missing: pd.DataFrame


def _solve(method: Method, obs, cfg: ExperimentConfig) -> Tuple[Solution, float]:
    d = cfg.prior.d
    if method is Method.L1:
        poly = build_polytope(obs, np.inf)
        started = time.perf_counter()
        sol = solve_l1(poly, debug=cfg.lp_debug, lp_options=cfg.lp_options)
    else:
        poly = build_polytope(obs, d)
        started = time.perf_counter()
        sol = solve_cqp(poly, d, cfg.bnb)
    return sol, time.perf_counter() - started


def run_single(cfg: ExperimentConfig, run: int) -> List[Dict[str, Any]]:
    """
    执行第 run 次随机运行（种子为 cfg.seed + run），返回按 (级数, 方法) 排列的日志行

    单个求解失败记为缺失值，不中断整个扫描。
    """
    seed = cfg.seed + run
    inst = generate(cfg.n, cfg.m, cfg.k, cfg.prior, seed)
    rows = []
    for levels in cfg.levels:
        specA = QuantSpec.covering(inst.A, levels, cfg.bound_mode, cfg.range_scale)
        specY = QuantSpec.covering(inst.y, levels, cfg.bound_mode, cfg.range_scale)
        obs = quantize(inst, specA, specY, cfg.prior)
        for method in cfg.methods:
            row = dict(zip(RUN_COLUMNS, [run, seed, method.value, levels] + [np.nan] * 4))
            try:
                sol, elapsed = _solve(method, obs, cfg)
            except RecoveryError as e:
                logger.warning(f"run {run} levels {levels} {method.value} 求解失败: {e}")
                rows.append(row)
                continue
            if not sol.feasible:
                logger.warning(f"run {run} levels {levels} {method.value}: 可行集为空")
                rows.append(row)
                continue
            metrics = compute_metrics(sol.x, inst.xTrue, inst.k, elapsed, d=cfg.prior.d, tol=cfg.support_tol)
            row.update(
                rel_err=metrics.rel_err,
                fp=metrics.fp_rate,
                fn=metrics.fn_rate,
                time_s=metrics.run_time if cfg.timing else 0.0,
            )
            rows.append(row)
    return rows


def summarize(runs: pd.DataFrame, cfg: ExperimentConfig) -> pd.DataFrame:
    """按 (方法, 量化级数) 计算均值与总体标准差（忽略缺失值）"""
    records = []
    for method in cfg.methods:
        for levels in cfg.levels:
            cell = runs[(runs["method"] == method.value) & (runs["levels"] == levels)]
            records.append(
                {
                    "method": method.value,
                    "levels": levels,
                    "rel_err_mean": cell["rel_err"].mean(),
                    "rel_err_std": cell["rel_err"].std(ddof=0),
                    "fp_mean": cell["fp"].mean(),
                    "fp_std": cell["fp"].std(ddof=0),
                    "fn_mean": cell["fn"].mean(),
                    "fn_std": cell["fn"].std(ddof=0),
                    "time_mean_s": cell["time_s"].mean(),
                }
            )
    return pd.DataFrame(records, columns=SUMMARY_COLUMNS)


def count_missing(runs: pd.DataFrame, cfg: ExperimentConfig) -> pd.DataFrame:
    """每个 (方法, 量化级数) 中求解失败或不可行的运行次数"""
    records = []
    for method in cfg.methods:
        for levels in cfg.levels:
            cell = runs[(runs["method"] == method.value) & (runs["levels"] == levels)]
            missing = int(cell["rel_err"].isna().sum())
            records.append({"method": method.value, "levels": levels, "missing": missing, "valid": len(cell) - missing})
    return pd.DataFrame(records, columns=["method", "levels", "missing", "valid"])


def run_experiment(
    cfg: ExperimentConfig, jobs: int = 1, progress: bool = False
) -> ExperimentResult:
    """
    执行实验扫描

    各次运行相互独立，jobs > 1 时并行执行；日志始终按 (run, levels, method) 排序。

    Args:
        cfg: 实验配置
        jobs: 并行进程数
        progress: 是否显示进度条

    Returns:
        实验结果
    """
    logger.info(
        f"开始实验: n={cfg.n}, m={cfg.m}, k={cfg.k}, [α,β]=[{cfg.prior.alpha}, {cfg.prior.beta}], "
        f"runs={cfg.runs}, levels={list(cfg.levels)}"
    )
    run_ids = range(cfg.runs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            batches = list(
                tqdm(pool.map(run_single, [cfg] * cfg.runs, run_ids), total=cfg.runs, disable=not progress)
            )
    else:
        batches = [run_single(cfg, run) for run in tqdm(run_ids, disable=not progress)]

    rows = [row for batch in batches for row in batch]
    runs = pd.DataFrame(rows, columns=RUN_COLUMNS)
    summary = summarize(runs, cfg)
    missing = count_missing(runs, cfg)
    for record, gaps in zip(summary.itertuples(index=False), missing.itertuples(index=False)):
        logger.info(
            f"{record.method} levels={record.levels}: rel_err={record.rel_err_mean:.3g}, "
            f"fp={record.fp_mean:.3g}, fn={record.fn_mean:.3g}"
        )
        if gaps.missing:
            logger.warning(
                f"{record.method} levels={record.levels}: 均值只基于 {gaps.valid}/{cfg.runs} 次运行"
                f"（{gaps.missing} 次缺失）"
            )
    return ExperimentResult(runs=runs, summary=summary, missing=missing)


@dataclass
class RunManifest:
    """运行清单：配置快照、版本、种子、码本规则、缺失单元、时间戳与输出路径"""

    config: Dict[str, Any]
    seeds: List[int]
    started: str
    codebook_range: str = "max absolute entry, per dataset (A and y separately)"
    missing: List[Dict[str, Any]] = field(default_factory=list)
    finished: str = ""
    outputs: Dict[str, str] = field(default_factory=dict)
    version: str = __version__
    app_config: Optional[Dict[str, Any]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tool": "sparse-cqp",
            "version": self.version,
            "config": self.config,
            "seeds": self.seeds,
            "codebookRange": self.codebook_range,
            "missingCells": self.missing,
            "missingTotal": sum(int(cell["missing"]) for cell in self.missing),
            "started": self.started,
            "finished": self.finished,
            "outputs": self.outputs,
            "appConfig": self.app_config,
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_experiment(
    cfg: ExperimentConfig,
    out_dir: Union[str, Path],
    jobs: int = 1,
    progress: bool = False,
    app_config: Optional[Dict[str, Any]] = None,
) -> RunManifest:
    """
    执行实验并写出 summary.csv、runs.csv 与 manifest.json

    Returns:
        运行清单
    """
    out_dir = Path(out_dir)
    manifest = RunManifest(
        config=cfg.to_dict(),
        seeds=[cfg.seed + r for r in range(cfg.runs)],
        started=_now(),
        codebook_range=cfg.codebook_rule,
        app_config=app_config,
    )
    result = run_experiment(cfg, jobs=jobs, progress=progress)

    files = FileUtils()
    summary_path = out_dir / "summary.csv"
    runs_path = out_dir / "runs.csv"
    manifest_path = out_dir / "manifest.json"
    files.write_table(summary_path, result.summary)
    files.write_table(runs_path, result.runs)

    manifest.missing = [
        {"method": row.method, "levels": int(row.levels), "missing": int(row.missing)}
        for row in result.missing.itertuples(index=False)
        if row.missing
    ]
    manifest.finished = _now()
    manifest.outputs = {
        "summary": str(summary_path),
        "runs": str(runs_path),
        "manifest": str(manifest_path),
    }
    files.write_json(manifest_path, manifest.to_dict())
    logger.info(f"实验结果已写入: {out_dir}")
    return manifest
