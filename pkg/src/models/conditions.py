"""
恢复条件模块

检验保证支撑集正确恢复的三个充分条件：

- P1：对任意非零 γ ∈ {0,±1}^n，‖Σ γ_i A_i‖∞ > 2Δy/d
- P2：对支撑集失配的 γ ∈ Q^n，‖Σ γ_i A_i‖∞ > 2Δy，
      Q = {-d} ∪ [(α-β)/2, (β-α)/2] ∪ [α, β]
- P3：同 P2，但作用在 Q(A) 的列上，阈值为 2Δy + ΔA·β·n

P2/P3 对每一种“分段指派”（每个坐标取 Q 的哪一段）解一个小线性规划，
指派按混合进制顺序枚举，平局保留最先找到的极小点。
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Tuple

import numpy as np
from loguru import logger

from ..exceptions import DimensionTooLarge, InvalidDimension
from .instance import MagnitudePrior
from .lp import LpProblem, solve_lp

MAX_N = 12
_CHUNK = 20000


class Proposition(str, Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"


class Quantifier(str, Enum):
    """P2/P3 中 γ 的取值范围"""

    MISMATCH = "mismatch"
    LITERAL = "literal"


@dataclass(frozen=True)
class ConditionReport:
    """条件检验报告；margin = 最坏情形范数 - 阈值"""

    proposition: Proposition
    holds: bool
    margin: float
    worst_gamma: np.ndarray
    threshold: float

    @property
    def minimum(self) -> float:
        return self.margin + self.threshold

    def to_dict(self) -> Dict[str, Any]:
        return {
            "proposition": self.proposition.value,
            "holds": self.holds,
            "margin": self.margin,
            "threshold": self.threshold,
            "worstGamma": self.worst_gamma.tolist(),
        }


def _as_matrix(A: Any) -> np.ndarray:
    A = np.array(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2:
        raise InvalidDimension(f"期望矩阵，实际维数 {A.ndim}")
    return A


def _check_size(n: int, max_n: int):
    if n > max_n:
        raise DimensionTooLarge(f"穷举检验要求 n <= {max_n}，实际 n = {n}")


def _assignments(n: int) -> np.ndarray:
    """按混合进制顺序列出 {0,1,2}^n（最后一位变化最快）"""
    codes = np.arange(3**n, dtype=np.int64)[:, None]
    weights = 3 ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((codes // weights) % 3).astype(np.int8)


def _report(
    proposition: Proposition, M: np.ndarray, gamma: np.ndarray, threshold: float
) -> ConditionReport:
    minimum = float(np.max(np.abs(M @ gamma)))
    margin = minimum - threshold
    return ConditionReport(
        proposition=proposition,
        holds=bool(margin > 0),
        margin=margin,
        worst_gamma=gamma,
        threshold=threshold,
    )


def check_prop1(A: Any, d: float, deltaY: float, max_n: int = MAX_N) -> ConditionReport:
    """
    检验 P1：min over 非零 γ ∈ {0,±1}^n 的 ‖Σ γ_i A_i‖∞ 是否大于 2Δy/d

    Args:
        A: 真实矩阵 (m×n)
        d: 区间中点
        deltaY: 输出误差界

    Returns:
        条件检验报告
    """
    A = _as_matrix(A)
    n = A.shape[1]
    _check_size(n, max_n)
    if not (d > 0):
        raise ValueError(f"d 必须为正数: {d}")

    gammas = _assignments(n).astype(float) - 1.0
    gammas = gammas[np.any(gammas != 0, axis=1)]
    norms = np.max(np.abs(gammas @ A.T), axis=1)
    idx = int(np.argmin(norms))
    report = _report(Proposition.P1, A, gammas[idx], 2.0 * deltaY / d)
    logger.debug(f"P1: min={report.minimum:.6g}, threshold={report.threshold:.6g}, holds={report.holds}")
    return report


def _piece_bounds(prior: MagnitudePrior) -> Tuple[np.ndarray, np.ndarray]:
    """Q 的三段：{-d}、[(α-β)/2, (β-α)/2]、[α, β]"""
    half = (prior.beta - prior.alpha) / 2.0
    lo = np.array([-prior.d, -half, prior.alpha])
    hi = np.array([-prior.d, half, prior.beta])
    return lo, hi


def _interval_floor(M: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """区间运算给出的 ‖M γ‖∞ 下界，γ 取遍各行的盒子"""
    floors = np.empty(lo.shape[0])
    for start in range(0, lo.shape[0], _CHUNK):
        a = lo[start:start + _CHUNK, None, :] * M[None, :, :]
        b = hi[start:start + _CHUNK, None, :] * M[None, :, :]
        row_lo = np.minimum(a, b).sum(axis=2)
        row_hi = np.maximum(a, b).sum(axis=2)
        gap = np.maximum(np.maximum(row_lo, -row_hi), 0.0)
        floors[start:start + _CHUNK] = gap.max(axis=1)
    return floors


def _min_over_box(M: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """min ‖M γ‖∞ s.t. lo <= γ <= hi，写成 min t 的线性规划"""
    m, n = M.shape
    ones = np.ones((m, 1))
    prob = LpProblem(
        c=np.concatenate([np.zeros(n), [1.0]]),
        Cineq=np.vstack([np.hstack([M, -ones]), np.hstack([-M, -ones])]),
        b=np.zeros(2 * m),
        lower=np.concatenate([lo, [0.0]]),
        upper=np.concatenate([hi, [np.inf]]),
    )
    res = solve_lp(prob)
    return np.clip(res.x[:n], lo, hi)


def _piecewise_minimum(
    M: np.ndarray, prior: MagnitudePrior, quantifier: Quantifier
) -> np.ndarray:
    """在 Q^n 的指定子集上最小化 ‖M γ‖∞，返回极小点 γ"""
    n = M.shape[1]
    if quantifier is Quantifier.LITERAL and prior.beta > prior.alpha:
        # 中间段含有任意小的非零向量：下确界为 0，取一个很小的非零见证
        witness = np.zeros(n)
        witness[0] = min((prior.beta - prior.alpha) / 2.0, 1e-12)
        return witness

    piece_lo, piece_hi = _piece_bounds(prior)
    digits = _assignments(n)
    # 全部取中间段的指派与真实支撑集一致（α = β 时即 γ = 0），不在检验范围内
    keep = ~np.all(digits == 1, axis=1)
    lo, hi = piece_lo[digits[keep]], piece_hi[digits[keep]]
    order = np.flatnonzero(keep)
    singleton = np.all(lo == hi, axis=1)

    best_value, best_index, best_gamma = np.inf, -1, None
    if np.any(singleton):
        values = np.max(np.abs(lo[singleton] @ M.T), axis=1)
        k = int(np.argmin(values))
        best_value = float(values[k])
        best_index = int(order[singleton][k])
        best_gamma = lo[singleton][k].copy()

    boxed = np.flatnonzero(~singleton)
    if boxed.size:
        floors = _interval_floor(M, lo[boxed], hi[boxed])
        solved = 0
        for row, floor in zip(boxed, floors):
            index = int(order[row])
            if floor > best_value or (floor == best_value and index > best_index):
                continue
            gamma = _min_over_box(M, lo[row], hi[row])
            solved += 1
            value = float(np.max(np.abs(M @ gamma)))
            if value < best_value or (value == best_value and index < best_index):
                best_value, best_index, best_gamma = value, index, gamma
        logger.debug(f"分段指派共 {boxed.size} 个含区间，求解线性规划 {solved} 个")

    return best_gamma


def check_prop2(
    A: Any,
    prior: MagnitudePrior,
    deltaY: float,
    quantifier: Quantifier = Quantifier.MISMATCH,
    max_n: int = MAX_N,
) -> ConditionReport:
    """
    检验 P2：在支撑集失配的 γ ∈ Q^n 上 min ‖Σ γ_i A_i‖∞ 是否大于 2Δy

    失配指至少一个坐标取 {-d} 或 [α, β] 段；quantifier=literal 时改为
    全部非零 γ ∈ Q^n。

    Args:
        A: 真实矩阵 (m×n)
        prior: 幅值先验
        deltaY: 输出误差界
        quantifier: γ 的取值范围

    Returns:
        条件检验报告
    """
    A = _as_matrix(A)
    _check_size(A.shape[1], max_n)
    gamma = _piecewise_minimum(A, prior, Quantifier(quantifier))
    report = _report(Proposition.P2, A, gamma, 2.0 * deltaY)
    logger.debug(f"P2: min={report.minimum:.6g}, threshold={report.threshold:.6g}, holds={report.holds}")
    return report


def check_prop3(
    QA: Any,
    prior: MagnitudePrior,
    deltaY: float,
    deltaA: float,
    quantifier: Quantifier = Quantifier.MISMATCH,
    max_n: int = MAX_N,
) -> ConditionReport:
    """
    检验 P3：与 P2 相同的最小化，作用在 Q(A) 的列上，阈值 2Δy + ΔA·β·n

    Args:
        QA: 量化矩阵 (m×n)
        prior: 幅值先验
        deltaY: 输出误差界
        deltaA: 矩阵误差界
        quantifier: γ 的取值范围

    Returns:
        条件检验报告
    """
    QA = _as_matrix(QA)
    n = QA.shape[1]
    _check_size(n, max_n)
    gamma = _piecewise_minimum(QA, prior, Quantifier(quantifier))
    report = _report(Proposition.P3, QA, gamma, 2.0 * deltaY + deltaA * prior.beta * n)
    logger.debug(f"P3: min={report.minimum:.6g}, threshold={report.threshold:.6g}, holds={report.holds}")
    return report
