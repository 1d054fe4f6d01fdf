from pathlib import Path
from typing import Callable, List, Optional, Union

import numpy as np
import typer
from rich.console import Console
from rich.table import Table
from typing_extensions import Annotated

from plugin.base import CLIPlugin
from plugin.decorators import register_plugin
from plugin.runtime import run_command, state
from pose.harness.io import align_frames, load_pose_records
from share.util import dump_json

console = Console()
print = console.print


@register_plugin
class ComparePlugin(CLIPlugin):
    @property
    def name(self) -> str:
        return "compare"

    @property
    def description(self) -> str:
        return "比较两组姿态，输出逐关节差异"

    @property
    def commands(self) -> List[Union[typer.Typer, Callable]]:
        app = self.new_app()

        @app.callback()
        def default(
            ctx: typer.Context,
            first: Annotated[Path, typer.Argument(exists=True, dir_okay=False, help="姿态 JSON A")] = None,
            second: Annotated[Path, typer.Argument(exists=True, dir_okay=False, help="姿态 JSON B")] = None,
            out: Annotated[Optional[Path], typer.Option("--out", "-o", dir_okay=False,
                                                        help="差异 JSON 输出路径")] = None,
        ):
            """two pose files → deltas"""
            if ctx.invoked_subcommand is not None:
                return
            if first is None or second is None:
                raise typer.BadParameter("需要两个姿态文件")
            run_command(lambda: compare(first, second, out))

        return [app]


def pose_deltas(a: np.ndarray, b: np.ndarray) -> dict:
    """a, b 为 (T, K, 3) 点集；返回逐关节的绝对/根相对平均距离 (mm)"""
    absolute = np.linalg.norm(a - b, axis=-1)
    root = state.topology.root_index
    relative = np.linalg.norm((a - a[:, root:root + 1]) - (b - b[:, root:root + 1]), axis=-1)
    return {
        "absolute": absolute.mean(axis=0),
        "root_relative": relative.mean(axis=0),
        "max_absolute": float(absolute.max()),
        "mean_absolute": float(absolute.mean()),
        "mean_root_relative": float(relative.mean()),
    }


def compare(first: Path, second: Path, out: Optional[Path]) -> None:
    topology = state.topology
    records_a, records_b = align_frames(load_pose_records(first, topology.root_index),
                                        load_pose_records(second, topology.root_index))
    poses_a, poses_b = [r.pose for r in records_a], [r.pose for r in records_b]
    deltas = pose_deltas(np.stack([p.points for p in poses_a]), np.stack([p.points for p in poses_b]))

    table = Table(title=f"{first.name} vs {second.name} ({len(poses_a)} 帧)")
    table.add_column("关节")
    table.add_column("绝对 (mm)", justify="right")
    table.add_column("根相对 (mm)", justify="right")
    for k, name in enumerate(topology.joints):
        table.add_row(name, f"{deltas['absolute'][k]:.3f}", f"{deltas['root_relative'][k]:.3f}")
    table.add_row("[bold]平均[/bold]", f"{deltas['mean_absolute']:.3f}", f"{deltas['mean_root_relative']:.3f}")
    print(table)

    if out is not None:
        dump_json({
            "frames": len(poses_a),
            "joints": list(topology.joints),
            "absolute": deltas["absolute"].tolist(),
            "root_relative": deltas["root_relative"].tolist(),
            "max_absolute": deltas["max_absolute"],
            "mean_absolute": deltas["mean_absolute"],
            "mean_root_relative": deltas["mean_root_relative"],
        }, out)
        print(f"[green]已写入 {out}[/green]")
