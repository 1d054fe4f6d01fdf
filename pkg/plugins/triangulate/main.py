from pathlib import Path
from typing import Callable, List, Optional, Union

import typer
from rich.console import Console
from rich.panel import Panel
from typing_extensions import Annotated

from configs import get_section
from plugin.base import CLIPlugin
from plugin.decorators import register_plugin
from plugin.runtime import parse_hop_values, run_command, state
from pose.core import FrameExecutor
from pose.core.errors import ValidationError
from pose.harness import PipelineConfig, triangulate_frame
from pose.harness.io import load_cameras, load_observations, load_prior, save_poses

console = Console()
print = console.print


@register_plugin
class TriangulatePlugin(CLIPlugin):
    @property
    def name(self) -> str:
        return "triangulate"

    @property
    def description(self) -> str:
        return "由多视角 2D 观测三角化 3D 姿态 (LT / AT / HT)"

    @property
    def commands(self) -> List[Union[typer.Typer, Callable]]:
        app = self.new_app()

        @app.callback()
        def default(
            ctx: typer.Context,
            cameras: Annotated[Path, typer.Option("--cameras", exists=True, dir_okay=False, help="相机 JSON")] = None,
            obs: Annotated[Path, typer.Option("--obs", exists=True, dir_okay=False, help="观测 JSON")] = None,
            prior: Annotated[Optional[List[Path]], typer.Option("--prior", exists=True, dir_okay=False,
                                                                help="先验 JSON，可重复")] = None,
            mode: Annotated[str, typer.Option("--mode", "-m", help="lt | at | ht")] = "ht",
            lam: Annotated[Optional[List[str]], typer.Option("--lambda", help="HOP=λ，覆盖先验文件中的权重")] = None,
            out: Annotated[Path, typer.Option("--out", "-o", dir_okay=False, help="姿态输出路径")] = Path("poses.json"),
        ):
            """obs + cameras + prior → poses"""
            if ctx.invoked_subcommand is not None:
                return
            if cameras is None or obs is None:
                raise typer.BadParameter("需要 --cameras 与 --obs")
            run_command(lambda: triangulate(cameras, obs, prior or [], mode, lam, out))

        return [app]


def triangulate(cameras_path: Path, obs_path: Path, prior_paths: List[Path], mode: str,
                lambdas: Optional[List[str]], out: Path) -> None:
    config = PipelineConfig.from_config(get_section("solver"), get_section("mvf"), get_section("plausibility"),
                                        get_section("anatomy"), mode=mode, threads=state.settings.threads)
    topology = state.topology
    cameras = load_cameras(cameras_path)
    observations = load_observations(obs_path)

    prior = None
    if mode == "ht":
        if not prior_paths:
            raise ValidationError("ht 模式需要 --prior")
        prior = load_prior(prior_paths, topology, parse_hop_values(lambdas))

    executor = FrameExecutor(config.threads)
    results = executor.map(lambda o: triangulate_frame(cameras, o, mode, prior, config), observations)
    poses = [pose for pose, _ in results]
    reports = [report for _, report in results]
    save_poses(poses, out, reports, [o.frame for o in observations])
    fallbacks = sum(1 for r in reports if r is not None and r.status != "cholesky")

    lam_text = ""
    if prior is not None:
        lam_text = "\nλ: " + ", ".join(f"hop{h}={e.lam:g}" for h, e in sorted(prior.entries.items()))
    print(Panel.fit(
        f"[bold]模式[/bold] {mode}   [bold]帧[/bold] {len(poses)}   [bold]相机[/bold] {len(cameras)}{lam_text}\n"
        f"求解回退次数: {fallbacks}\n输出: {out}",
        title="三角化",
        border_style="green",
    ))
