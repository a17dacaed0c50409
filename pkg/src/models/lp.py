"""
线性规划模块

稠密的有界变量原始单纯形法，求解

    min cᵀx  s.t.  Cineq x <= b,  lower <= x <= upper

第一阶段用人工变量找可行基；前 10·(p+n) 次迭代按 Dantzig 规则选入基变量，
之后切换为 Bland 规则防止循环。问题规模很小（n 约 50 以内），全部使用稠密运算。
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from ..exceptions import InvalidDimension, NumericalFailure

OPT_TOL = 1e-9
FEAS_TOL = 1e-7
PIVOT_TOL = 1e-9
BLAND_AFTER = 10
MAX_ITER_FACTOR = 50


class LpStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class LpProblem:
    """线性规划问题；盒约束分量可以是 ±inf"""

    c: np.ndarray
    Cineq: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float).reshape(-1)
        n = c.shape[0]
        Cineq = np.array(self.Cineq, dtype=float).reshape(-1, n)
        b = np.array(self.b, dtype=float).reshape(-1)
        lower = np.array(self.lower, dtype=float).reshape(-1)
        upper = np.array(self.upper, dtype=float).reshape(-1)

        if b.shape != (Cineq.shape[0],):
            raise InvalidDimension(f"b 的长度 {b.shape} 与约束行数 {Cineq.shape[0]} 不一致")
        if lower.shape != (n,) or upper.shape != (n,):
            raise InvalidDimension("盒约束长度与变量维数不一致")
        if np.any(lower > upper) or np.any(lower == np.inf) or np.any(upper == -np.inf):
            raise ValueError("盒约束为空")

        for name, arr in (("c", c), ("Cineq", Cineq), ("b", b), ("lower", lower), ("upper", upper)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def p(self) -> int:
        return self.Cineq.shape[0]


@dataclass
class LpResult:
    """
    求解结果

    duals 为原始不等式行的非负乘子 λ，满足 c + Cineqᵀλ 在盒约束上的互补条件；
    basis 为最终基变量的标签（x 为结构变量，s 为松弛变量，a 为人工变量）。
    """

    status: LpStatus
    x: np.ndarray
    value: float
    iterations: int
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    basis: List[Tuple[str, float]] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def format_basis(result: LpResult) -> str:
    """把最终基格式化为文本"""
    lines = [f"status={result.status.value} iterations={result.iterations} value={result.value!r}"]
    for row, (label, value) in enumerate(result.basis):
        lines.append(f"  row {row}: {label} = {value!r}")
    return "\n".join(lines)


class _BoundedSimplex:
    """
    标准形 A z = rhs, 0 <= z <= U 上的单纯形迭代

    原始变量经平移/取反/拆分变成下界为 0 的变量 z，再追加松弛变量与人工变量。
    """

    def __init__(
        self,
        prob: LpProblem,
        opt_tol: float,
        feas_tol: float,
        pivot_tol: float,
    ):
        self.prob = prob
        self.opt_tol = opt_tol
        self.feas_tol = feas_tol
        self.pivot_tol = pivot_tol

        self._transform_variables()

        p = prob.p
        C_shift = prob.Cineq @ self.T
        rhs = prob.b - prob.Cineq @ self.offset
        self.row_sign = np.where(rhs >= 0, 1.0, -1.0)

        art_rows = np.flatnonzero(self.row_sign < 0)
        n_struct = self.T.shape[1]
        self.n_struct = n_struct
        self.n_cols = n_struct + p + art_rows.size

        A = np.zeros((p, self.n_cols))
        A[:, :n_struct] = C_shift
        A[:, n_struct:n_struct + p] = np.eye(p)
        A *= self.row_sign[:, None]
        A[art_rows, n_struct + p + np.arange(art_rows.size)] = 1.0
        self.A = A
        self.rhs = np.abs(rhs)

        self.U = np.concatenate([self.U_struct, np.full(p, np.inf), np.full(art_rows.size, np.inf)])
        self.artificial = np.zeros(self.n_cols, dtype=bool)
        self.artificial[n_struct + p:] = True

        self.basis = np.empty(p, dtype=np.int64)
        self.basis[self.row_sign > 0] = n_struct + np.flatnonzero(self.row_sign > 0)
        self.basis[art_rows] = n_struct + p + np.arange(art_rows.size)
        self.at_upper = np.zeros(self.n_cols, dtype=bool)

        self.iterations = 0
        self.bland_after = BLAND_AFTER * (p + prob.n)
        self.max_iter = MAX_ITER_FACTOR * (p + prob.n)

    def _transform_variables(self):
        """x = offset + T z，z >= 0，z 的上界为 U_struct"""
        lower, upper = self.prob.lower, self.prob.upper
        columns, bounds = [], []
        offset = np.zeros(self.prob.n)
        for j in range(self.prob.n):
            unit = np.zeros(self.prob.n)
            unit[j] = 1.0
            if np.isfinite(lower[j]):
                offset[j] = lower[j]
                columns.append(unit)
                bounds.append(upper[j] - lower[j])
            elif np.isfinite(upper[j]):
                offset[j] = upper[j]
                columns.append(-unit)
                bounds.append(np.inf)
            else:
                columns.extend([unit, -unit])
                bounds.extend([np.inf, np.inf])
        self.T = np.array(columns, dtype=float).T.reshape(self.prob.n, len(columns))
        self.offset = offset
        self.U_struct = np.array(bounds, dtype=float)

    def _basic_values(self, B: np.ndarray) -> np.ndarray:
        upper_cols = np.flatnonzero(self.at_upper)
        rhs = self.rhs - self.A[:, upper_cols] @ self.U[upper_cols]
        return np.linalg.solve(B, rhs)

    def run(self, cost: np.ndarray) -> str:
        """在当前基上迭代至最优或无界，返回 'optimal' 或 'unbounded'"""
        enterable = ~self.artificial
        p = self.A.shape[0]
        while True:
            B = self.A[:, self.basis]
            try:
                xB = self._basic_values(B)
                y = np.linalg.solve(B.T, cost[self.basis])
            except np.linalg.LinAlgError as e:
                raise NumericalFailure(f"基矩阵奇异: {e}") from e

            reduced = cost - self.A.T @ y
            nonbasic = np.ones(self.n_cols, dtype=bool)
            nonbasic[self.basis] = False
            increase = nonbasic & enterable & ~self.at_upper & (reduced < -self.opt_tol)
            decrease = nonbasic & enterable & self.at_upper & (reduced > self.opt_tol)
            candidates = np.flatnonzero(increase | decrease)
            if candidates.size == 0:
                self.xB, self.y = xB, y
                return "optimal"

            if self.iterations >= self.max_iter:
                raise NumericalFailure(f"单纯形迭代次数超过上限 {self.max_iter}")

            if self.iterations < self.bland_after:
                j = int(candidates[np.argmax(np.abs(reduced[candidates]))])
            else:
                j = int(candidates[0])
            sigma = -1.0 if self.at_upper[j] else 1.0

            try:
                rate = sigma * np.linalg.solve(B, self.A[:, j])
            except np.linalg.LinAlgError as e:
                raise NumericalFailure(f"基矩阵奇异: {e}") from e

            limits = np.full(p, np.inf)
            hits_upper = np.zeros(p, dtype=bool)
            dropping = rate > self.pivot_tol
            limits[dropping] = np.maximum(xB[dropping], 0.0) / rate[dropping]
            basic_upper = self.U[self.basis]
            rising = (rate < -self.pivot_tol) & np.isfinite(basic_upper)
            limits[rising] = np.maximum(basic_upper[rising] - xB[rising], 0.0) / -rate[rising]
            hits_upper[rising] = True

            step = min(float(np.min(limits, initial=np.inf)), float(self.U[j]))
            if not np.isfinite(step):
                return "unbounded"

            self.iterations += 1
            tie = 1e-12 * (1.0 + step)
            if self.U[j] <= step + tie:
                # 入基变量先到达自身另一端界：只翻转，不换基
                self.at_upper[j] = not self.at_upper[j]
                continue

            rows = np.flatnonzero(limits <= step + tie)
            r = int(rows[np.argmin(self.basis[rows])])
            leaving = int(self.basis[r])
            self.at_upper[leaving] = bool(hits_upper[r])
            self.basis[r] = j
            self.at_upper[j] = False

    def primal(self) -> np.ndarray:
        z = np.where(self.at_upper, self.U, 0.0)
        z[self.basis] = self.xB
        return z

    def labels(self) -> List[Tuple[str, float]]:
        p = self.A.shape[0]
        out = []
        for col, value in zip(self.basis, self.xB):
            if col < self.n_struct:
                label = f"z{col}"
            elif col < self.n_struct + p:
                label = f"s{col - self.n_struct}"
            else:
                label = f"a{col - self.n_struct - p}"
            out.append((label, float(value)))
        return out


def _solve_without_rows(prob: LpProblem) -> LpResult:
    """没有不等式行时逐分量取界"""
    x = np.zeros(prob.n)
    for j in range(prob.n):
        lo, hi, cj = prob.lower[j], prob.upper[j], prob.c[j]
        target = hi if cj < 0 else lo
        if cj == 0:
            target = lo if np.isfinite(lo) else (hi if np.isfinite(hi) else 0.0)
        if not np.isfinite(target):
            return LpResult(LpStatus.UNBOUNDED, np.full(prob.n, np.nan), -np.inf, 0)
        x[j] = target
    return LpResult(LpStatus.OPTIMAL, x, float(prob.c @ x), 0, duals=np.zeros(0))


def solve_lp(
    prob: LpProblem,
    opt_tol: float = OPT_TOL,
    feas_tol: float = FEAS_TOL,
    pivot_tol: float = PIVOT_TOL,
    debug: bool = False,
) -> LpResult:
    """
    求解线性规划

    对固定输入结果确定（固定的选主元规则）。

    Args:
        prob: 线性规划问题
        opt_tol: 约化成本的最优性容差
        feas_tol: 第一阶段判定不可行的容差
        pivot_tol: 比值检验中主元的最小幅值
        debug: 为 True 时以 DEBUG 级别输出最终基

    Returns:
        求解结果
    """
    if prob.p == 0:
        result = _solve_without_rows(prob)
        if debug:
            logger.debug(format_basis(result))
        return result

    simplex = _BoundedSimplex(prob, opt_tol, feas_tol, pivot_tol)

    # 第一阶段：最小化人工变量之和
    phase_one_cost = simplex.artificial.astype(float)
    if np.any(simplex.artificial):
        if simplex.run(phase_one_cost) != "optimal":
            raise NumericalFailure("第一阶段出现无界方向")
        infeasibility = float(phase_one_cost @ simplex.primal())
        scale = max(1.0, float(np.max(simplex.rhs)))
        if infeasibility > feas_tol * scale:
            logger.debug(f"线性规划不可行: 第一阶段目标 {infeasibility:.3e}")
            return LpResult(
                LpStatus.INFEASIBLE, np.full(prob.n, np.nan), np.nan, simplex.iterations
            )
        simplex.U[simplex.artificial] = 0.0
        simplex.at_upper[simplex.artificial] = False

    # 第二阶段
    cost = np.zeros(simplex.n_cols)
    cost[: simplex.n_struct] = simplex.T.T @ prob.c
    if simplex.run(cost) == "unbounded":
        result = LpResult(
            LpStatus.UNBOUNDED, np.full(prob.n, np.nan), -np.inf, simplex.iterations
        )
        if debug:
            logger.debug(format_basis(result))
        return result

    z = simplex.primal()
    x = simplex.offset + simplex.T @ z[: simplex.n_struct]
    duals = -simplex.row_sign * simplex.y
    result = LpResult(
        status=LpStatus.OPTIMAL,
        x=x,
        value=float(prob.c @ x),
        iterations=simplex.iterations,
        duals=duals,
        basis=simplex.labels(),
    )
    if debug:
        logger.debug("最终基:\n" + format_basis(result))
    return result
