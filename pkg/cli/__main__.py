import logging
from pathlib import Path
from typing import Optional

import typer
from rich.console import Console
from rich.table import Table
from typing_extensions import Annotated

from configs import settings
from plugin.manager import PluginManager
from plugin.registry import PluginRegistry
from plugin import runtime
from pose import __version__

logger = logging.getLogger(__name__)
console = Console()

# 创建应用实例
app = typer.Typer(
    name="htpose",
    help="多视角 3D 人体姿态整体三角化工具",
    add_completion=True,
    no_args_is_help=True,
)

# 创建插件管理器
plugin_manager = PluginManager()


def initialize() -> None:
    """发现插件并把每个插件的 typer 应用挂到根命令下"""
    root_dir = Path(__file__).parent.parent
    plugins_dir = root_dir / "plugins"
    if not plugins_dir.exists():
        raise RuntimeError(f"插件目录不存在: {plugins_dir}")

    failed = PluginRegistry.discover_plugins(package_path="plugins", plugins_dir=str(plugins_dir))
    if failed:
        logger.warning(f"以下插件未能加载: {', '.join(failed)}")

    plugin_manager.load_all()
    plugin_manager.initialize_all({"state": runtime.state})

    for plugin in plugin_manager.get_plugins():
        for command in plugin.commands:
            if isinstance(command, typer.Typer):
                app.add_typer(command, name=plugin.name)


@app.callback()
def callback(
    seed: Annotated[Optional[int], typer.Option("--seed", help="全局随机种子")] = None,
    threads: Annotated[Optional[int], typer.Option("--threads", min=1, help="逐帧并行线程数")] = None,
    topology: Annotated[Optional[Path], typer.Option("--topology", exists=True, dir_okay=False,
                                                     help="骨架拓扑 JSON 文件")] = None,
    log_level: Annotated[Optional[str], typer.Option("--log-level", help="日志级别")] = None,
    debug: Annotated[bool, typer.Option("--debug", help="输出调试日志与完整异常栈")] = False,
):
    """htpose：LT / AT / HT 三角化、MVF 关键点修正与 PPP 合理性评估"""
    runtime.configure(
        settings.override(seed=seed, threads=threads, log_level=log_level,
                          topology=str(topology) if topology else None),
        debug=debug,
    )


@app.command()
def version():
    """显示版本信息"""
    console.print(f"htpose v{__version__}")


@app.command()
def plugins():
    """列出已安装的子命令插件"""
    table = Table(title="已安装的插件")
    table.add_column("命令", style="cyan")
    table.add_column("说明")
    table.add_column("版本", style="dim")
    for plugin in plugin_manager.get_plugins():
        table.add_row(plugin.name, plugin.description, plugin.version)
    console.print(table)


def main():
    """CLI 入口函数"""
    initialize()
    try:
        app()
    finally:
        plugin_manager.shutdown_all()


if __name__ == "__main__":
    main()
