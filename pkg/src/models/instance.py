"""
数据模型模块

定义恢复问题的领域类型（真实实例、幅值先验、量化码本、观测），
并提供均匀量化与随机实例生成。
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np
from loguru import logger

from ..exceptions import InvalidDimension, SaturationError


def _frozen(values: Any, ndim: int) -> np.ndarray:
    """复制为只读浮点数组，并检查维数"""
    arr = np.array(values, dtype=float)
    if ndim == 2 and arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != ndim:
        raise InvalidDimension(f"期望 {ndim} 维数组，实际为 {arr.ndim} 维")
    arr.setflags(write=False)
    return arr


class BoundMode(str, Enum):
    """量化误差界与步长的关系"""

    HALF_STEP = "HalfStep"
    FULL_STEP = "FullStep"


@dataclass(frozen=True)
class MagnitudePrior:
    """非零参数幅值先验 [alpha, beta]"""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0):
            raise ValueError(f"alpha 必须为正数: {self.alpha}")
        if self.beta < self.alpha:
            raise ValueError(f"beta 不能小于 alpha: [{self.alpha}, {self.beta}]")

    @property
    def d(self) -> float:
        """区间中点 (alpha+beta)/2"""
        return (self.alpha + self.beta) / 2.0

    def to_dict(self) -> Dict[str, float]:
        return {"alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class QuantSpec:
    """
    对称均匀量化码本

    码本点为 range*(-1 + 2j/(levels-1))，j = 0..levels-1。
    bound 为与该码本关联的误差界，缺省取 step/2。
    """

    levels: int
    range: float
    bound: Optional[float] = None

    def __post_init__(self):
        if int(self.levels) != self.levels or self.levels < 2:
            raise ValueError(f"量化级数必须是不小于 2 的整数: {self.levels}")
        if not (self.range > 0):
            raise ValueError(f"量化范围必须为正数: {self.range}")
        if self.bound is None:
            object.__setattr__(self, "bound", self.step / 2.0)
        elif self.bound < self.step / 2.0:
            raise ValueError(f"误差界 {self.bound} 小于半步长 {self.step / 2.0}")

    @property
    def step(self) -> float:
        return 2.0 * self.range / (self.levels - 1)

    @classmethod
    def covering(
        cls,
        values: np.ndarray,
        levels: int,
        bound_mode: BoundMode = BoundMode.HALF_STEP,
        scale: float = 1.0,
    ) -> "QuantSpec":
        """
        为一组数据构造覆盖其最大绝对值的码本

        Args:
            values: 待量化数据
            levels: 量化级数
            bound_mode: 误差界取半步长还是整步长
            scale: 半宽相对最大绝对值的倍数（>= 1）

        Returns:
            量化码本
        """
        if scale < 1.0:
            raise ValueError(f"码本倍数必须不小于 1: {scale}")
        peak = float(np.max(np.abs(values))) if np.size(values) else 0.0
        half_width = peak * scale if peak > 0 else 1.0
        spec = cls(levels=levels, range=half_width)
        if BoundMode(bound_mode) is BoundMode.FULL_STEP:
            spec = cls(levels=levels, range=half_width, bound=spec.step)
        return spec

    def points(self, index: np.ndarray) -> np.ndarray:
        """码本中第 index 个点（整数运算后再缩放，保证 0 与对称点精确）"""
        top = self.levels - 1
        return (2 * np.asarray(index, dtype=np.int64) - top) * self.range / top

    def to_dict(self) -> Dict[str, float]:
        return {"levels": int(self.levels), "range": self.range, "bound": self.bound}


def quantize_array(values: Any, spec: QuantSpec) -> np.ndarray:
    """
    逐元素量化到最近的码本点

    正好位于两点中间时取绝对值较小的点。

    Args:
        values: 标量或数组
        spec: 量化码本

    Returns:
        与输入同形状的量化结果
    """
    v = np.asarray(values, dtype=float)
    if np.any(np.abs(v) > spec.range):
        worst = float(np.max(np.abs(v)))
        raise SaturationError(f"数据 {worst} 超出量化范围 ±{spec.range}")

    top = spec.levels - 1
    position = (v / spec.range + 1.0) * top / 2.0
    lower = np.clip(np.floor(position), 0, top - 1).astype(np.int64)
    upper = lower + 1
    p_lo = spec.points(lower)
    p_hi = spec.points(upper)
    d_lo = np.abs(v - p_lo)
    d_hi = np.abs(p_hi - v)
    take_hi = (d_hi < d_lo) | ((d_hi == d_lo) & (np.abs(p_hi) < np.abs(p_lo)))
    return np.where(take_hi, p_hi, p_lo)


def quantize_value(v: float, spec: QuantSpec) -> float:
    """量化单个数值"""
    return float(quantize_array(v, spec))


@dataclass(frozen=True)
class Instance:
    """真实问题实例：A、稀疏向量 xTrue 与精确输出 y = A xTrue"""

    A: np.ndarray
    xTrue: np.ndarray
    y: np.ndarray
    k: int
    prior: Optional[MagnitudePrior] = None
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A, 2))
        object.__setattr__(self, "xTrue", _frozen(self.xTrue, 1))
        object.__setattr__(self, "y", _frozen(self.y, 1))

        m, n = self.A.shape
        if self.xTrue.shape != (n,) or self.y.shape != (m,):
            raise InvalidDimension(f"维度不一致: A {self.A.shape}, x {self.xTrue.shape}, y {self.y.shape}")
        if int(np.count_nonzero(self.xTrue)) != self.k:
            raise ValueError(f"xTrue 的非零元个数不等于 k={self.k}")

        scale = max(float(np.max(np.abs(self.A), initial=0.0)), 1.0)
        scale *= max(float(np.max(np.abs(self.xTrue), initial=0.0)), 1.0)
        if np.any(np.abs(self.y - self.A @ self.xTrue) > 1e-12 * n * scale):
            raise ValueError("y 与 A @ xTrue 不一致")

    @classmethod
    def from_data(
        cls,
        A: Any,
        xTrue: Any,
        prior: Optional[MagnitudePrior] = None,
        seed: Optional[int] = None,
    ) -> "Instance":
        """由 A 与 xTrue 计算 y 并构造实例"""
        A = _frozen(A, 2)
        x = _frozen(xTrue, 1)
        return cls(A=A, xTrue=x, y=A @ x, k=int(np.count_nonzero(x)), prior=prior, seed=seed)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def support(self) -> np.ndarray:
        """真实支撑集（升序下标）"""
        return np.flatnonzero(self.xTrue)

    def to_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {
            "n": self.n,
            "m": self.m,
            "k": self.k,
            "A": self.A.tolist(),
            "xTrue": self.xTrue.tolist(),
            "y": self.y.tolist(),
            "seed": self.seed,
        }
        if self.prior is not None:
            doc.update(self.prior.to_dict())
        return doc

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "Instance":
        prior = None
        if "alpha" in doc and "beta" in doc:
            prior = MagnitudePrior(float(doc["alpha"]), float(doc["beta"]))
        return cls(
            A=doc["A"],
            xTrue=doc["xTrue"],
            y=doc["y"],
            k=int(doc.get("k", np.count_nonzero(doc["xTrue"]))),
            prior=prior,
            seed=doc.get("seed"),
        )


@dataclass(frozen=True)
class Observation:
    """量化观测 Q(A)、Q(y) 及其误差界"""

    QA: np.ndarray
    Qy: np.ndarray
    deltaA: float
    deltaY: float
    prior: MagnitudePrior
    meta: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "QA", _frozen(self.QA, 2))
        object.__setattr__(self, "Qy", _frozen(self.Qy, 1))
        if self.Qy.shape != (self.QA.shape[0],):
            raise InvalidDimension(f"维度不一致: QA {self.QA.shape}, Qy {self.Qy.shape}")
        if self.deltaA < 0 or self.deltaY < 0:
            raise ValueError(f"误差界不能为负: deltaA={self.deltaA}, deltaY={self.deltaY}")

    @property
    def n(self) -> int:
        return self.QA.shape[1]

    @property
    def m(self) -> int:
        return self.QA.shape[0]

    def to_dict(self) -> Dict[str, Any]:
        doc = {
            "n": self.n,
            "m": self.m,
            "QA": self.QA.tolist(),
            "Qy": self.Qy.tolist(),
            "deltaA": self.deltaA,
            "deltaY": self.deltaY,
        }
        doc.update(self.prior.to_dict())
        doc.update(self.meta)
        return doc

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "Observation":
        for key in ("QA", "Qy", "deltaA", "deltaY", "alpha", "beta"):
            if key not in doc:
                raise ValueError(f"观测文件缺少字段: {key}")
        return cls(
            QA=doc["QA"],
            Qy=doc["Qy"],
            deltaA=float(doc["deltaA"]),
            deltaY=float(doc["deltaY"]),
            prior=MagnitudePrior(float(doc["alpha"]), float(doc["beta"])),
        )


def quantize(
    inst: Instance, specA: QuantSpec, specY: QuantSpec, prior: MagnitudePrior
) -> Observation:
    """
    量化实例，得到观测

    Args:
        inst: 真实实例
        specA: A 的量化码本
        specY: y 的量化码本
        prior: 幅值先验

    Returns:
        观测，误差界分别取两个码本的 bound
    """
    QA = quantize_array(inst.A, specA)
    Qy = quantize_array(inst.y, specY)
    logger.debug(f"量化完成: levels={specA.levels}/{specY.levels}, step={specA.step:.3g}/{specY.step:.3g}")
    return Observation(
        QA=QA,
        Qy=Qy,
        deltaA=specA.bound,
        deltaY=specY.bound,
        prior=prior,
        meta={"levels": int(specA.levels), "rangeA": specA.range, "rangeY": specY.range},
    )


def generate(n: int, m: int, k: int, prior: MagnitudePrior, seed: int) -> Instance:
    """
    生成随机实例

    A 的元素独立服从 N(0, 1/m)；支撑集在全部 C(n,k) 个子集中均匀抽取；
    非零值在 [alpha, beta] 上均匀分布。相同种子给出逐位相同的结果。

    Args:
        n: 参数维数
        m: 测量个数
        k: 稀疏度
        prior: 幅值先验
        seed: 随机种子

    Returns:
        实例
    """
    if n < 1 or m < 1 or k < 0:
        raise InvalidDimension(f"维度必须为正: n={n}, m={m}, k={k}")
    if k > n:
        raise InvalidDimension(f"k exceeds n (k={k}, n={n})")

    rng = np.random.default_rng(seed)
    A = rng.normal(0.0, 1.0 / np.sqrt(m), size=(m, n))
    support = np.sort(rng.choice(n, size=k, replace=False))
    x = np.zeros(n)
    x[support] = rng.uniform(prior.alpha, prior.beta, size=k)
    return Instance(A=A, xTrue=x, y=A @ x, k=k, prior=prior, seed=seed)
