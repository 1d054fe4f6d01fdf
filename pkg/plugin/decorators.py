from typing import Type

from .base import CLIPlugin
from .registry import PluginRegistry


def register_plugin(cls: Type[CLIPlugin]) -> Type[CLIPlugin]:
    """插件类装饰器，只接受 CLIPlugin 子类"""
    if not issubclass(cls, CLIPlugin):
        raise TypeError(f"{cls.__name__} 不是 CLIPlugin 的子类")
    return PluginRegistry.register(cls)
