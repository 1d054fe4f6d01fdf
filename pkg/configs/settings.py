import os
from dataclasses import dataclass
from typing import Optional
import logging

from dotenv import load_dotenv

from .config_manager import get_global_config

logger = logging.getLogger(__name__)


@dataclass
class Settings:
    """运行时配置，优先级：命令行 > 环境变量 > config.yml"""
    seed: int = 0
    threads: int = 1
    log_level: str = "WARNING"
    topology: Optional[str] = None

    @classmethod
    def from_env(cls) -> 'Settings':
        """从 .env / 环境变量加载配置，缺省值取 config.yml 的 global 段"""
        load_dotenv()
        defaults = get_global_config()
        raw = {
            'seed': os.getenv('HTPOSE_SEED', defaults.get('seed', 0)),
            'threads': os.getenv('HTPOSE_THREADS', defaults.get('threads', 1)),
            'log_level': os.getenv('HTPOSE_LOG_LEVEL', defaults.get('log_level', 'WARNING')),
            'topology': os.getenv('HTPOSE_TOPOLOGY', defaults.get('topology')),
        }
        try:
            return cls(
                seed=int(raw['seed']),
                threads=int(raw['threads']),
                log_level=str(raw['log_level']).upper(),
                topology=raw['topology'] or None,
            )
        except ValueError as e:
            logger.error(f"环境变量格式错误: {str(e)}")
            raise

    def override(self, seed: Optional[int] = None, threads: Optional[int] = None,
                 log_level: Optional[str] = None, topology: Optional[str] = None) -> 'Settings':
        """用命令行参数覆盖"""
        return Settings(
            seed=self.seed if seed is None else seed,
            threads=self.threads if threads is None else threads,
            log_level=self.log_level if log_level is None else log_level.upper(),
            topology=self.topology if topology is None else topology,
        )


# 全局配置实例，由 CLI 根回调按命令行参数覆盖
settings = Settings.from_env()
