from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, List, Union

import typer


class CLIPlugin(ABC):
    """CLI 插件基类，每个插件对应一个子命令"""

    @property
    @abstractmethod
    def name(self) -> str:
        """子命令名称"""
        pass

    @property
    @abstractmethod
    def description(self) -> str:
        """子命令描述"""
        pass

    @property
    def version(self) -> str:
        return "0.1.0"

    @property
    def commands(self) -> List[Union[typer.Typer, Callable]]:
        """CLI 命令列表

        Returns:
            List[Union[typer.Typer, Callable]]: typer.Typer 实例会以 name 挂到根命令下
        """
        return []

    def initialize(self, context: Dict[str, Any] = None) -> None:
        """插件初始化

        Args:
            context: 初始化上下文
        """
        pass

    def shutdown(self) -> None:
        pass

    def format_help(self) -> str:
        return f"{self.name}: {self.description} (v{self.version})"

    def new_app(self) -> typer.Typer:
        """子命令的 typer 应用，未指定子命令时执行 callback"""
        return typer.Typer(
            name=self.name,
            help=self.description,
            invoke_without_command=True,
            no_args_is_help=False,
            context_settings={"allow_interspersed_args": True},
        )
