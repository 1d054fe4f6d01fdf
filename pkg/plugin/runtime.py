"""插件共享的运行时状态与命令包装"""
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, TypeVar
import logging

import typer
from rich.console import Console
from rich.logging import RichHandler

from configs import Settings, settings
from pose.anatomy.topology import SkeletonTopology, load_topology
from pose.core.errors import HtPoseError, NumericalError, ValidationError

logger = logging.getLogger(__name__)
console = Console()

T = TypeVar("T")


@dataclass
class RuntimeState:
    """根命令解析出的全局参数"""
    settings: Settings = field(default_factory=lambda: settings)
    debug: bool = False
    _topology: Optional[SkeletonTopology] = None

    @property
    def topology(self) -> SkeletonTopology:
        if self._topology is None:
            self._topology = load_topology(self.settings.topology)
        return self._topology


state = RuntimeState()


def configure(new_settings: Settings, debug: bool = False) -> RuntimeState:
    """更新全局状态并安装 RichHandler"""
    state.settings = new_settings
    state.debug = debug
    state._topology = None
    level = "DEBUG" if debug else new_settings.log_level
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), rich_tracebacks=debug)],
        force=True,
    )
    return state


def run_command(func: Callable[[], T]) -> T:
    """执行命令主体，ValidationError → 退出码 2，NumericalError → 3，其余 → 1"""
    try:
        return func()
    except typer.Exit:
        raise
    except ValidationError as e:
        console.print(f"[red]输入错误 ({type(e).__name__}): {str(e)}[/red]")
        raise typer.Exit(code=e.exit_code)
    except NumericalError as e:
        console.print(f"[red]数值错误 ({type(e).__name__}): {str(e)}[/red]")
        raise typer.Exit(code=e.exit_code)
    except HtPoseError as e:
        console.print(f"[red]执行出错: {str(e)}[/red]")
        raise typer.Exit(code=e.exit_code)
    except Exception as e:
        console.print(f"[red]执行出错: {str(e)}[/red]")
        if state.debug:
            logger.exception("详细错误")
        raise typer.Exit(code=1)


def parse_hop_values(items: Optional[Sequence[str]], cast=float) -> Dict[int, float]:
    """解析 ["0=8000", "1=4000"] 形式的 hop 参数"""
    out = {}
    for item in items or []:
        hop, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"参数格式应为 HOP=VALUE: {item}")
        try:
            out[int(hop)] = cast(value)
        except ValueError:
            raise ValidationError(f"无法解析 hop 参数: {item}")
    return out
