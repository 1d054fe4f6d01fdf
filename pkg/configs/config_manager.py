from pathlib import Path
from typing import Any, Dict, Optional, Union
import logging

import yaml

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = Path(__file__).parent / "config.yml"


class ConfigManager:
    """config.yml 的单例读取器，按 section 返回默认参数"""
    _instance = None
    _config = None
    _path: Path = DEFAULT_CONFIG

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(ConfigManager, cls).__new__(cls)
        return cls._instance

    def __init__(self):
        if self._config is None:
            self._load_config()

    def _load_config(self) -> None:
        """载入配置文件"""
        with open(self._path, 'r', encoding='utf-8') as f:
            self._config = yaml.safe_load(f) or {}
        logger.debug(f"载入配置 {self._path}")

    def reload(self, path: Optional[Union[str, Path]] = None) -> None:
        """切换到另一个配置文件（测试或 --config 时使用）"""
        self._path = Path(path) if path else DEFAULT_CONFIG
        self._load_config()

    @property
    def variable_config(self) -> Dict[str, Any]:
        return self._config

    def get_global_config(self) -> Dict[str, Any]:
        return self._config.get('global', {})

    def get_section(self, name: str) -> Dict[str, Any]:
        """获取某个 section，不存在时返回空字典"""
        return dict(self._config.get(name) or {})


# 全局实例
config_manager = ConfigManager()


def get_variable_config() -> Dict[str, Any]:
    """获取完整配置的便捷函数"""
    return config_manager.variable_config


def get_global_config() -> Dict[str, Any]:
    return config_manager.get_global_config()


def get_section(name: str) -> Dict[str, Any]:
    """获取 section 配置的便捷函数"""
    return config_manager.get_section(name)


def hop_table(section: Dict[str, Any], key: str) -> Dict[int, float]:
    """把 {0: 25, '1': 20} 形式的 hop 表统一成 int 键"""
    return {int(k): v for k, v in (section.get(key) or {}).items()}
