from pathlib import Path
from typing import Callable, List, Optional, Union

import numpy as np
import typer
from rich.console import Console
from rich.panel import Panel
from typing_extensions import Annotated

from configs import get_section
from plugin.base import CLIPlugin
from plugin.decorators import register_plugin
from plugin.runtime import run_command, state
from pose.core import FrameExecutor
from pose.core.errors import EmptyInput
from pose.harness.io import list_frames, load_cameras, load_maps, save_observations
from pose.mvf import FusionConfig, refine_observation
from share.util import load_json

console = Console()
print = console.print


@register_plugin
class RefinePlugin(CLIPlugin):
    @property
    def name(self) -> str:
        return "refine"

    @property
    def description(self) -> str:
        return "多视角融合 (MVF) 修正 2D 关键点"

    @property
    def commands(self) -> List[Union[typer.Typer, Callable]]:
        app = self.new_app()

        @app.callback()
        def default(
            ctx: typer.Context,
            cameras: Annotated[Path, typer.Option("--cameras", exists=True, dir_okay=False, help="相机 JSON")] = None,
            maps: Annotated[Path, typer.Option("--maps", exists=True, file_okay=False,
                                               help="热图/特征图张量目录")] = None,
            strategy: Annotated[Optional[str], typer.Option("--strategy", help="dot | fcl")] = None,
            gamma: Annotated[Optional[float], typer.Option("--gamma", help="归一化极线距离场的指数 γ")] = None,
            fusion: Annotated[Optional[str], typer.Option("--fusion", help="all | most-conf")] = None,
            fcl_weights: Annotated[Optional[Path], typer.Option("--fcl-weights", exists=True, dir_okay=False,
                                                                help="fcl 权重向量 JSON (长度 2N)")] = None,
            out: Annotated[Path, typer.Option("--out", "-o", dir_okay=False,
                                              help="修正后观测输出路径")] = Path("refined_observations.json"),
        ):
            """heatmaps/features + cameras → refined obs"""
            if ctx.invoked_subcommand is not None:
                return
            if cameras is None or maps is None:
                raise typer.BadParameter("需要 --cameras 与 --maps")
            run_command(lambda: refine(cameras, maps, strategy, gamma, fusion, fcl_weights, out))

        return [app]


def refine(cameras_path: Path, maps_dir: Path, strategy: Optional[str], gamma: Optional[float],
           fusion: Optional[str], fcl_path: Optional[Path], out: Path) -> None:
    weights = np.asarray(load_json(fcl_path), dtype=float) if fcl_path else None
    config = FusionConfig.from_config(get_section("mvf"), strategy=strategy, gamma=gamma,
                                      fusion=fusion, fcl_weights=weights)
    cameras = load_cameras(cameras_path)
    view_ids = [cam.id for cam in cameras]
    num_joints = state.topology.num_joints
    frames = list_frames(maps_dir)
    if not frames:
        raise EmptyInput(f"目录中没有 frame_* 子目录: {maps_dir}")

    def process(frame: int):
        heatmaps, feature_maps = load_maps(maps_dir, frame, view_ids, num_joints)
        return refine_observation(cameras, heatmaps, feature_maps, config, frame)

    results = FrameExecutor(state.settings.threads).map(process, frames)
    initial = [i for i, _ in results]
    refined = [r for _, r in results]
    save_observations(refined, out)
    save_observations(initial, out.with_name(f"{out.stem}_initial.json"))

    shift = np.mean([np.linalg.norm(r.points - i.points, axis=-1).mean() for i, r in results])
    print(Panel.fit(
        f"[bold]策略[/bold] {config.strategy}   [bold]融合[/bold] {config.fusion}   [bold]γ[/bold] {config.gamma:g}\n"
        f"帧 {len(frames)}, 平均位移 {shift:.3f} px\n输出: {out}",
        title="MVF",
        border_style="green",
    ))
