"""
模型模块

包含恢复问题的领域类型、可行集、线性规划内核、两种恢复方法与恢复条件检验。
"""

from .instance import (
    BoundMode,
    Instance,
    MagnitudePrior,
    Observation,
    QuantSpec,
    generate,
    quantize,
    quantize_value,
)
from .feasible import Polytope, build_polytope, is_member
from .lp import LpProblem, LpResult, LpStatus, solve_lp
from .solvers import (
    BnbConfig,
    Solution,
    SolveStatus,
    objective_cqp,
    oracle_vertex_min,
    refine_on_support,
    solve_cqp,
    solve_l1,
)
from .conditions import ConditionReport, check_prop1, check_prop2, check_prop3

__all__ = [
    "BoundMode",
    "Instance",
    "MagnitudePrior",
    "Observation",
    "QuantSpec",
    "generate",
    "quantize",
    "quantize_value",
    "Polytope",
    "build_polytope",
    "is_member",
    "LpProblem",
    "LpResult",
    "LpStatus",
    "solve_lp",
    "BnbConfig",
    "Solution",
    "SolveStatus",
    "objective_cqp",
    "oracle_vertex_min",
    "refine_on_support",
    "solve_cqp",
    "solve_l1",
    "ConditionReport",
    "check_prop1",
    "check_prop2",
    "check_prop3",
]
