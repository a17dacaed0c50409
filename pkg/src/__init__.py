"""
量化压缩数据下的稀疏非负参数恢复

这个包提供随机实例生成与量化、可行多面体构造、有界变量单纯形法、
ℓ1 基线与凹二次规划的分支定界全局求解、支撑集恢复条件检验，
以及可复现的数值实验流程。
"""

__version__ = "0.1.0"

from .config import Config
from .models import Observation, solve_cqp, solve_l1
from .utils import setup_logging

__all__ = ["Config", "Observation", "solve_cqp", "solve_l1", "setup_logging", "__version__"]
