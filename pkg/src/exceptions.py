"""
异常定义模块

恢复流程中可能抛出的全部异常。不可行与节点预算耗尽通过求解状态返回，
不在此处定义。
"""


class RecoveryError(Exception):
    """稀疏恢复相关错误的基类"""


class SaturationError(RecoveryError):
    """量化值超出码本范围"""


class InvalidDimension(RecoveryError, ValueError):
    """维度不合法或不一致"""


class DimensionTooLarge(RecoveryError, ValueError):
    """维度超过穷举算法的上限"""


class NumericalFailure(RecoveryError):
    """单纯形法遇到病态基或迭代次数超限"""


class RankDeficient(RecoveryError):
    """支撑集上的子矩阵不满秩"""


class ConfigError(RecoveryError, ValueError):
    """实验配置格式错误"""
