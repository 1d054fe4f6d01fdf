from typing import Dict, List, Type
import importlib
import logging
import pkgutil

from .base import CLIPlugin

logger = logging.getLogger(__name__)


class PluginRegistry:
    """插件注册中心"""
    _plugins: Dict[str, Type[CLIPlugin]] = {}

    @classmethod
    def register(cls, plugin_cls: Type[CLIPlugin]) -> Type[CLIPlugin]:
        """注册插件类，同名类后注册的覆盖先注册的"""
        if plugin_cls.__name__ in cls._plugins:
            logger.warning(f"插件 {plugin_cls.__name__} 重复注册")
        cls._plugins[plugin_cls.__name__] = plugin_cls
        return plugin_cls

    @classmethod
    def registered(cls) -> List[Type[CLIPlugin]]:
        return list(cls._plugins.values())

    @classmethod
    def discover_plugins(cls, package_path: str, plugins_dir: str) -> List[str]:
        """导入插件目录下的每个包，触发 @register_plugin

        Args:
            package_path: 插件包的导入路径
            plugins_dir: 插件目录的实际路径
        Returns:
            加载失败的插件名
        """
        failed = []
        for _, name, _ in pkgutil.iter_modules([plugins_dir]):
            if name.startswith('_'):  # 跳过私有模块
                continue
            try:
                importlib.import_module(f"{package_path}.{name}")
            except Exception as e:
                logger.error(f"加载插件 {name} 失败: {str(e)}")
                failed.append(name)
        return failed
