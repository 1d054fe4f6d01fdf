from .config_manager import config_manager, get_section, hop_table
from .settings import Settings, settings

__all__ = [
    "config_manager",
    "get_section",
    "hop_table",
    "Settings",
    "settings",
]
