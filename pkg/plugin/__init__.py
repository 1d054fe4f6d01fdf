from .base import CLIPlugin
from .decorators import register_plugin
from .manager import PluginManager
from .registry import PluginRegistry

__all__ = [
    "CLIPlugin",
    "register_plugin",
    "PluginManager",
    "PluginRegistry",
]
