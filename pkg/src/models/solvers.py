"""
求解器模块

两种恢复方法：
- ℓ1 基线：在可行多面体上最小化 Σ x_i（线性规划）
- 凹二次规划：在 [0,d]^n ∩ 可行多面体上全局最小化 Σ (d·x_i - x_i²)，
  用割线下估计的空间分支定界求解

以及基于顶点枚举的校验器和支撑集上的最小二乘精化。
"""

import heapq
import itertools
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
from loguru import logger

from ..exceptions import DimensionTooLarge, InvalidDimension, RankDeficient
from .feasible import Polytope, is_member
from .instance import Observation
from .lp import LpProblem, LpResult, solve_lp

SUPPORT_TOL = 1e-6
ORACLE_MAX_N = 12
_ORACLE_CHUNK = 20000


class SolveStatus(str, Enum):
    GLOBAL_OPTIMAL = "GlobalOptimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"


class BranchRule(str, Enum):
    WIDEST_GAP = "WidestGap"
    LP_GAP = "LpGap"


@dataclass(frozen=True)
class BnbConfig:
    """分支定界参数"""

    abs_gap: float = 1e-8
    max_nodes: int = 1_000_000
    branch_rule: BranchRule = BranchRule.WIDEST_GAP
    keep_trace: bool = False
    lp_options: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.abs_gap > 0):
            raise ValueError(f"absGap 必须为正数: {self.abs_gap}")
        if self.max_nodes < 1:
            raise ValueError(f"maxNodes 必须为正整数: {self.max_nodes}")
        object.__setattr__(self, "branch_rule", BranchRule(self.branch_rule))


@dataclass
class Solution:
    """恢复结果"""

    x: np.ndarray
    objective: float
    status: SolveStatus
    nodes: int = 0
    wall_time: float = 0.0
    lower_bound: Optional[float] = None
    trace: List[Tuple[int, int, float]] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status is not SolveStatus.INFEASIBLE

    @property
    def gap(self) -> Optional[float]:
        """目标值与已证下界之差"""
        if self.lower_bound is None or not self.feasible:
            return None
        return max(self.objective - self.lower_bound, 0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x": self.x.tolist() if self.feasible else None,
            "objective": self.objective if self.feasible else None,
            "status": self.status.value,
            "nodes": int(self.nodes),
            "wallTime": self.wall_time,
        }


def _infeasible(n: int, started: float, nodes: int = 0) -> Solution:
    return Solution(
        x=np.full(n, np.nan),
        objective=np.inf,
        status=SolveStatus.INFEASIBLE,
        nodes=nodes,
        wall_time=time.perf_counter() - started,
    )


def support_threshold(d: float, tol: float = SUPPORT_TOL) -> float:
    """x_i 被视为非零的阈值 tol·max(d, 1)"""
    return tol * max(d, 1.0)


def estimate_support(x: Iterable[float], d: float, tol: float = SUPPORT_TOL) -> np.ndarray:
    """估计值的支撑集（升序下标）"""
    return np.flatnonzero(np.asarray(x, dtype=float) > support_threshold(d, tol))


def objective_cqp(x: Any, d: float) -> float:
    """
    凹目标 d‖x‖₁ - ‖x‖₂²（x >= 0 时 ℓ1 项即分量和）

    Args:
        x: 非负向量
        d: 区间中点

    Returns:
        Σ (d·x_i - x_i²)
    """
    x = np.asarray(x, dtype=float)
    return float(np.sum(d * x - x * x))


def chord_coefficients(lo: Any, hi: Any, d: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    φ(t) = d·t - t² 在 [lo, hi] 上的割线 slope·t + intercept

    Returns:
        (slope, intercept)，即 (d - lo - hi, lo·hi)
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return d - lo - hi, lo * hi


def chord_value(t: Any, lo: Any, hi: Any, d: float) -> np.ndarray:
    slope, intercept = chord_coefficients(lo, hi, d)
    return slope * np.asarray(t, dtype=float) + intercept


def solve_l1(
    poly: Polytope, debug: bool = False, lp_options: Optional[Dict[str, Any]] = None
) -> Solution:
    """
    ℓ1 基线：min Σ x_i，x 属于多面体

    Args:
        poly: 以 lower = 0、upper = +inf 构造的多面体
        debug: 为 True 时输出最终基
        lp_options: 传给 solve_lp 的容差（opt_tol、feas_tol、pivot_tol）

    Returns:
        恢复结果
    """
    started = time.perf_counter()
    prob = LpProblem(c=np.ones(poly.n), Cineq=poly.C, b=poly.g, lower=poly.lower, upper=poly.upper)
    res = solve_lp(prob, debug=debug, **(lp_options or {}))
    if not res.optimal:
        logger.debug(f"ℓ1 线性规划未得到最优解: {res.status.value}")
        return _infeasible(poly.n, started)

    x = np.maximum(res.x, poly.lower)
    return Solution(
        x=x,
        objective=float(np.sum(x)),
        status=SolveStatus.GLOBAL_OPTIMAL,
        nodes=1,
        wall_time=time.perf_counter() - started,
        lower_bound=res.value,
    )


@dataclass(order=True)
class _Node:
    bound: float
    node_id: int
    lo: np.ndarray = field(compare=False)
    hi: np.ndarray = field(compare=False)
    x: np.ndarray = field(compare=False)


class _CqpBranchAndBound:
    """凹二次规划的空间分支定界（最优优先，按节点编号打破平局）"""

    def __init__(self, poly: Polytope, d: float, cfg: BnbConfig):
        self.poly = poly
        self.d = d
        self.cfg = cfg
        self.best_x: Optional[np.ndarray] = None
        self.best_value = np.inf
        self.nodes = 0
        self.trace: List[Tuple[int, int, float]] = []

    def relax(self, lo: np.ndarray, hi: np.ndarray) -> Tuple[LpResult, float]:
        """子盒上的割线松弛，返回 LP 结果与下界"""
        slope, intercept = chord_coefficients(lo, hi, self.d)
        prob = LpProblem(c=slope, Cineq=self.poly.C, b=self.poly.g, lower=lo, upper=hi)
        res = solve_lp(prob, **self.cfg.lp_options)
        self.nodes += 1
        bound = res.value + float(np.sum(intercept)) if res.optimal else np.inf
        return res, bound

    def offer(self, x: np.ndarray):
        """用 LP 点及其 {0,d} 取整更新当前最优可行解"""
        x = np.clip(x, self.poly.lower, self.poly.upper)
        value = objective_cqp(x, self.d)
        if value < self.best_value:
            self.best_value, self.best_x = value, x

        corner = np.where(x > self.d / 2.0, self.d, 0.0)
        if self.best_value > 0.0 and is_member(corner, self.poly):
            self.best_value, self.best_x = objective_cqp(corner, self.d), corner

    def pick_branch(self, node: _Node) -> int:
        width = node.hi - node.lo
        if self.cfg.branch_rule is BranchRule.LP_GAP:
            score = (node.x - node.lo) * (node.hi - node.x)
        else:
            score = width * width / 4.0
        return int(np.argmax(score))

    def solve(self) -> Tuple[SolveStatus, float]:
        lo, hi = self.poly.lower.copy(), self.poly.upper.copy()
        root, root_bound = self.relax(lo, hi)
        if not root.optimal:
            return SolveStatus.INFEASIBLE, np.inf
        self.offer(root.x)
        if self.cfg.keep_trace:
            self.trace.append((0, -1, root_bound))

        open_nodes = [_Node(root_bound, 0, lo, hi, root.x)]
        next_id = 1
        while open_nodes:
            node = open_nodes[0]
            if node.bound >= self.best_value - self.cfg.abs_gap:
                break
            if self.nodes >= self.cfg.max_nodes:
                logger.warning(f"分支定界节点预算 {self.cfg.max_nodes} 耗尽，返回当前最优可行解")
                return SolveStatus.FEASIBLE, node.bound
            heapq.heappop(open_nodes)

            i = self.pick_branch(node)
            w = node.hi[i] - node.lo[i]
            split = float(np.clip(node.x[i], node.lo[i] + 0.2 * w, node.hi[i] - 0.2 * w))
            logger.debug(
                f"节点 {node.node_id}: 下界 {node.bound:.6g}, 上界 {self.best_value:.6g}, "
                f"在 x[{i}] = {split:.6g} 处分支"
            )

            for child_lo_i, child_hi_i in ((node.lo[i], split), (split, node.hi[i])):
                lo_c, hi_c = node.lo.copy(), node.hi.copy()
                lo_c[i], hi_c[i] = child_lo_i, child_hi_i
                res, bound = self.relax(lo_c, hi_c)
                if not res.optimal:
                    continue
                if self.cfg.keep_trace:
                    self.trace.append((next_id, node.node_id, bound))
                self.offer(res.x)
                if bound < self.best_value - self.cfg.abs_gap:
                    heapq.heappush(open_nodes, _Node(bound, next_id, lo_c, hi_c, res.x))
                next_id += 1

        bound = min(open_nodes[0].bound, self.best_value) if open_nodes else self.best_value
        return SolveStatus.GLOBAL_OPTIMAL, bound


def solve_cqp(poly: Polytope, d: float, cfg: Optional[BnbConfig] = None) -> Solution:
    """
    凹二次规划的全局最小化

    在每个子盒 [l,u] 上把 φ(t) = d·t - t² 换成其割线（凹函数的割线位于函数下方），
    得到线性规划下界；用 LP 解处的真实目标值及其 {0,d} 取整更新上界。
    节点预算耗尽时返回状态为 Feasible 的当前最优解。

    Args:
        poly: 以 lower = 0、upper = d 构造的多面体
        d: 区间中点
        cfg: 分支定界参数

    Returns:
        恢复结果
    """
    cfg = cfg or BnbConfig()
    started = time.perf_counter()
    if np.any(~np.isfinite(poly.upper)):
        raise ValueError("凹二次规划需要有限的盒约束上界")

    bnb = _CqpBranchAndBound(poly, d, cfg)
    status, bound = bnb.solve()
    if status is SolveStatus.INFEASIBLE:
        return _infeasible(poly.n, started, bnb.nodes)

    elapsed = time.perf_counter() - started
    logger.debug(f"分支定界结束: {status.value}, 节点 {bnb.nodes}, 目标 {bnb.best_value:.6g}, 用时 {elapsed:.3f}s")
    return Solution(
        x=bnb.best_x,
        objective=bnb.best_value,
        status=status,
        nodes=bnb.nodes,
        wall_time=elapsed,
        lower_bound=bound,
        trace=bnb.trace,
    )


def oracle_vertex_min(poly: Polytope, d: float) -> Solution:
    """
    顶点枚举校验器

    凹函数在多面体上的最小值在顶点取得：枚举所有 n 个有效约束的组合，
    解出交点，保留可行者，返回目标最小的顶点（平局取最先枚举到的）。

    Args:
        poly: 多面体（n <= 12）
        d: 区间中点

    Returns:
        恢复结果
    """
    n = poly.n
    if n > ORACLE_MAX_N:
        raise DimensionTooLarge(f"顶点枚举要求 n <= {ORACLE_MAX_N}，实际 n = {n}")
    started = time.perf_counter()

    eye = np.eye(n)
    finite_lo = np.isfinite(poly.lower)
    finite_hi = np.isfinite(poly.upper)
    G = np.vstack([poly.C, -eye[finite_lo], eye[finite_hi]])
    h = np.concatenate([poly.g, -poly.lower[finite_lo], poly.upper[finite_hi]])
    row_norm = np.linalg.norm(G, axis=1)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(h), initial=0.0)))

    best_x, best_value, examined = None, np.inf, 0
    combos = itertools.combinations(range(G.shape[0]), n)
    while True:
        chunk = np.array(list(itertools.islice(combos, _ORACLE_CHUNK)), dtype=np.int64)
        if chunk.size == 0:
            break
        chunk = chunk.reshape(-1, n)
        examined += chunk.shape[0]

        mats = G[chunk]
        scale = np.prod(row_norm[chunk], axis=1)
        regular = np.abs(np.linalg.det(mats)) > 1e-10 * np.maximum(scale, 1e-300)
        if not np.any(regular):
            continue
        verts = np.linalg.solve(mats[regular], h[chunk[regular]][..., None])[..., 0]
        feasible = np.all(G @ verts.T <= h[:, None] + tol, axis=0)
        if not np.any(feasible):
            continue
        verts = np.clip(verts[feasible], poly.lower, poly.upper)
        values = np.sum(d * verts - verts * verts, axis=1)
        idx = int(np.argmin(values))
        if values[idx] < best_value:
            best_value, best_x = float(values[idx]), verts[idx]

    if best_x is None:
        return _infeasible(n, started, examined)
    return Solution(
        x=best_x,
        objective=best_value,
        status=SolveStatus.GLOBAL_OPTIMAL,
        nodes=examined,
        wall_time=time.perf_counter() - started,
        lower_bound=best_value,
    )


def refine_on_support(obs: Observation, support: Iterable[int]) -> np.ndarray:
    """
    已知支撑集时由最小二乘重新估计非零值

    Args:
        obs: 量化观测
        support: 支撑集下标（|support| <= m）

    Returns:
        长度为 n 的估计，支撑集之外为 0
    """
    cols = np.array(sorted(set(int(i) for i in support)), dtype=np.int64)
    x = np.zeros(obs.n)
    if cols.size == 0:
        return x
    if cols.size > obs.m:
        raise InvalidDimension(f"支撑集大小 {cols.size} 超过测量数 {obs.m}")

    sub = obs.QA[:, cols]
    if np.linalg.matrix_rank(sub) < cols.size:
        raise RankDeficient(f"支撑集 {cols.tolist()} 上的子矩阵秩不足")
    coef, *_ = np.linalg.lstsq(sub, obs.Qy, rcond=None)
    x[cols] = coef
    return x
