"""
工具模块

包含日志配置与文件读写工具。
"""

from .logger import setup_logging
from .file_utils import FileUtils

__all__ = ["setup_logging", "FileUtils"]
