"""
可行集模块

由量化观测构造可行多面体 {C x <= g, lower <= x <= upper} 并判断成员关系。
"""

from dataclasses import dataclass
from typing import Any, Dict, Union

import numpy as np

from ..exceptions import InvalidDimension
from .instance import Observation, _frozen

# 成员判定的默认绝对容差
MEMBER_TOL = 1e-9


@dataclass(frozen=True)
class Polytope:
    """线性不等式 C x <= g 加上单独存放的盒约束"""

    C: np.ndarray
    g: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "C", _frozen(self.C, 2))
        object.__setattr__(self, "g", _frozen(self.g, 1))
        object.__setattr__(self, "lower", _frozen(self.lower, 1))
        object.__setattr__(self, "upper", _frozen(self.upper, 1))

        p, n = self.C.shape
        if self.g.shape != (p,):
            raise InvalidDimension(f"g 的长度 {self.g.shape} 与 C 的行数 {p} 不一致")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise InvalidDimension("盒约束长度与变量维数不一致")
        if np.any(self.lower > self.upper):
            raise ValueError("盒约束下界大于上界")

    @property
    def n(self) -> int:
        return self.C.shape[1]

    @classmethod
    def box(cls, n: int, upper: float) -> "Polytope":
        """只有盒约束 [0, upper]^n、没有不等式行的多面体"""
        return cls(C=np.zeros((0, n)), g=np.zeros(0), lower=np.zeros(n), upper=np.full(n, upper))

    def to_dict(self) -> Dict[str, Any]:
        # JSON 不支持无穷，无上界记为 null
        return {
            "C": self.C.tolist(),
            "g": self.g.tolist(),
            "lower": self.lower.tolist(),
            "upper": [None if np.isinf(u) else float(u) for u in self.upper],
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "Polytope":
        n = len(doc["lower"])
        C = np.array(doc["C"], dtype=float).reshape(-1, n)
        upper = [np.inf if u is None else float(u) for u in doc["upper"]]
        return cls(C=C, g=doc["g"], lower=doc["lower"], upper=upper)


def build_polytope(obs: Observation, upper: Union[float, np.ndarray]) -> Polytope:
    """
    构造可行多面体

    C = [Q(A) - ΔA·1 1ᵀ; -Q(A) - ΔA·1 1ᵀ]，g = [Q(y) + Δy·1; -Q(y) + Δy·1]，
    盒约束为 [0, upper]。

    Args:
        obs: 量化观测
        upper: 上界，标量或长度 n 的向量；凹二次规划取 d，ℓ1 基线取 np.inf

    Returns:
        可行多面体
    """
    n = obs.n
    upper_vec = np.asarray(upper, dtype=float)
    if upper_vec.ndim == 0:
        upper_vec = np.full(n, float(upper_vec))
    elif upper_vec.shape != (n,):
        raise InvalidDimension(f"上界长度应为 {n}")

    shift = obs.deltaA * np.ones_like(obs.QA)
    C = np.vstack([obs.QA - shift, -obs.QA - shift])
    g = np.concatenate([obs.Qy + obs.deltaY, -obs.Qy + obs.deltaY])
    return Polytope(C=C, g=g, lower=np.zeros(n), upper=upper_vec)


def is_member(x: Any, poly: Polytope, tol: float = MEMBER_TOL) -> bool:
    """
    判断 x 是否属于多面体

    Args:
        x: 长度为 n 的向量
        poly: 多面体
        tol: 绝对容差

    Returns:
        C x <= g + tol 且 lower - tol <= x <= upper + tol 时为 True
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (poly.n,):
        raise InvalidDimension(f"x 的长度 {x.shape} 与多面体维数 {poly.n} 不一致")
    if tol < 0:
        raise ValueError("容差不能为负")

    if np.any(x < poly.lower - tol) or np.any(x > poly.upper + tol):
        return False
    return bool(np.all(poly.C @ x <= poly.g + tol))


def residual_form_member(x: Any, obs: Observation, tol: float = MEMBER_TOL) -> bool:
    """
    以残差形式判定成员关系（仅对 x >= 0 成立）

    |Q(A)x - Q(y)|_j <= Δy + ΔA·Σ x_i 对每一行 j 成立。
    """
    x = np.asarray(x, dtype=float)
    residual = np.abs(obs.QA @ x - obs.Qy)
    return bool(np.all(residual <= obs.deltaY + obs.deltaA * np.sum(x) + tol))
