"""
日志配置模块

提供统一的日志配置和管理。
"""

import sys
from pathlib import Path
from typing import Any, Dict

from loguru import logger


def setup_logging(config: Dict[str, Any]):
    """
    设置日志配置

    标准输出留给命令行报告，日志写到 stderr，可选再写入轮转文件。

    Args:
        config: 日志配置字典
    """
    logger.remove()

    level = config.get("level", "INFO")
    format_str = config.get(
        "format", "{time:YYYY-MM-DD HH:mm:ss} | {level} | {name}:{function}:{line} - {message}"
    )
    log_file = config.get("file")

    logger.add(
        sys.stderr,
        format=format_str,
        level=level,
        colorize=False,
    )

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        logger.add(
            log_file,
            format=format_str,
            level=level,
            rotation=config.get("rotation", "1 day"),
            retention=config.get("retention", "30 days"),
            encoding="utf-8",
        )

    logger.debug("日志系统初始化完成")
