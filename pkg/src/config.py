"""
配置管理模块

负责加载和管理应用的配置参数，包括日志、线性规划容差、分支定界参数和实验设置。
"""

import copy
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

# 仓库自带的默认配置文件
DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config" / "config.yaml"

# 配置文件缺失时使用的内置默认值
DEFAULT_SETTINGS: Dict[str, Any] = {
    "app": {"name": "sparse-cqp", "version": "0.1.0"},
    "logging": {
        "level": "INFO",
        "format": "{time:YYYY-MM-DD HH:mm:ss} | {level} | {name}:{function}:{line} - {message}",
        "file": None,
        "rotation": "1 day",
        "retention": "30 days",
    },
    "feasible": {"member_tol": 1e-9},
    "lp": {"opt_tol": 1e-9, "feas_tol": 1e-7, "pivot_tol": 1e-9, "debug": False},
    "bnb": {"abs_gap": 1e-8, "max_nodes": 1000000, "branch_rule": "WidestGap"},
    "solvers": {"support_tol": 1e-6},
    "conditions": {"max_n": 12, "quantifier": "mismatch"},
    "bench": {"jobs": 1, "output_dir": "./results"},
}


class Config:
    """配置管理类"""

    def __init__(self, config_path: Optional[str] = None):
        """
        初始化配置管理器

        Args:
            config_path: 配置文件路径，默认为仓库内的 config/config.yaml
        """
        if config_path is None:
            self.config_path = DEFAULT_CONFIG_PATH
            self._config = (
                self._load_config() if self.config_path.exists() else copy.deepcopy(DEFAULT_SETTINGS)
            )
        else:
            self.config_path = Path(config_path)
            self._config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """加载配置文件，并用内置默认值补齐缺失的键"""
        if not self.config_path.exists():
            raise FileNotFoundError(f"配置文件不存在: {self.config_path}")

        with open(self.config_path, "r", encoding="utf-8") as f:
            loaded = yaml.safe_load(f) or {}

        return _merge(copy.deepcopy(DEFAULT_SETTINGS), loaded)

    def get(self, key: str, default: Any = None) -> Any:
        """
        获取配置值

        Args:
            key: 配置键，支持点号分隔的嵌套键
            default: 默认值

        Returns:
            配置值
        """
        keys = key.split(".")
        value = self._config

        try:
            for k in keys:
                value = value[k]
            return value
        except (KeyError, TypeError):
            return default

    def set(self, key: str, value: Any):
        """
        设置配置值

        Args:
            key: 配置键，支持点号分隔的嵌套键
            value: 配置值
        """
        keys = key.split(".")
        config = self._config

        for k in keys[:-1]:
            if k not in config:
                config[k] = {}
            config = config[k]

        config[keys[-1]] = value

    def save(self, path: Optional[str] = None):
        """
        保存配置到文件

        Args:
            path: 保存路径，默认为原始配置文件路径
        """
        save_path = Path(path) if path else self.config_path

        with open(save_path, "w", encoding="utf-8") as f:
            yaml.dump(self._config, f, default_flow_style=False, allow_unicode=True)

    def snapshot(self) -> Dict[str, Any]:
        """返回配置的深拷贝，用于写入运行清单"""
        return copy.deepcopy(self._config)

    @property
    def logging_config(self) -> Dict[str, Any]:
        """获取日志配置"""
        return self.get("logging", {})

    @property
    def lp_config(self) -> Dict[str, Any]:
        """获取线性规划配置"""
        return self.get("lp", {})

    @property
    def lp_options(self) -> Dict[str, float]:
        """传给 solve_lp 的容差参数"""
        lp = self.lp_config
        return {key: float(lp[key]) for key in ("opt_tol", "feas_tol", "pivot_tol") if key in lp}

    @property
    def solver_config(self) -> Dict[str, Any]:
        """获取分支定界与支撑集阈值配置"""
        return {**self.get("bnb", {}), **self.get("solvers", {})}

    @property
    def conditions_config(self) -> Dict[str, Any]:
        """获取恢复条件检验配置"""
        return self.get("conditions", {})

    @property
    def bench_config(self) -> Dict[str, Any]:
        """获取实验配置"""
        return self.get("bench", {})


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            base[key] = _merge(base[key], value)
        else:
            base[key] = value
    return base
