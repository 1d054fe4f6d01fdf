from pathlib import Path
from typing import Callable, List, Optional, Union

import typer
from rich.console import Console
from rich.table import Table
from typing_extensions import Annotated

from configs import get_section
from plugin.base import CLIPlugin
from plugin.decorators import register_plugin
from plugin.runtime import run_command, state
from pose.harness.io import load_poses, save_plausibility
from pose.plausibility import fit_plausibility_model

console = Console()
print = console.print


@register_plugin
class FitAngleModelPlugin(CLIPlugin):
    @property
    def name(self) -> str:
        return "fit-angle-model"

    @property
    def description(self) -> str:
        return "拟合骨长参考、关节角占据网格与关节角 GMM"

    @property
    def commands(self) -> List[Union[typer.Typer, Callable]]:
        app = self.new_app()

        @app.callback()
        def default(
            ctx: typer.Context,
            poses: Annotated[Path, typer.Argument(exists=True, dir_okay=False, help="训练姿态 JSON")] = None,
            out: Annotated[Path, typer.Option("--out", "-o", dir_okay=False,
                                              help="合理性模型输出路径")] = Path("plausibility.json"),
            components: Annotated[Optional[int], typer.Option("--components", min=1, help="每个关节的 GMM 分量数")] = None,
            bin_deg: Annotated[Optional[float], typer.Option("--bin-deg", help="占据网格分辨率 (度)")] = None,
            dilate: Annotated[Optional[int], typer.Option("--dilate", min=0, help="占据网格膨胀半径 (格)")] = None,
            threshold: Annotated[Optional[float], typer.Option("--threshold", help="写入模型的默认骨长阈值 R")] = None,
        ):
            """poses → plausibility model"""
            if ctx.invoked_subcommand is not None:
                return
            if poses is None:
                raise typer.BadParameter("需要训练姿态文件", param_hint="POSES")
            run_command(lambda: fit(poses, out, components, bin_deg, dilate, threshold))

        return [app]


def fit(poses_path: Path, out: Path, components: Optional[int], bin_deg: Optional[float],
        dilate: Optional[int], threshold: Optional[float]) -> None:
    section = get_section("plausibility")
    topology = state.topology
    poses = load_poses(poses_path)
    model = fit_plausibility_model(
        poses, topology,
        bin_deg=float(bin_deg if bin_deg is not None else section.get("bin_deg", 5)),
        dilate=int(dilate if dilate is not None else section.get("dilate", 1)),
        threshold=float(threshold if threshold is not None else section.get("threshold", 0.2)),
        n_components=int(components or section.get("components", 4)),
        seed=state.settings.seed,
        border_quantile=float(section.get("border_quantile", 0.0027)),
    )
    save_plausibility(model, topology, out)

    table = Table(title=f"关节角模型 ({len(poses)} 个训练姿态)")
    table.add_column("关节")
    table.add_column("占据格数", justify="right")
    table.add_column("GMM 收敛")
    table.add_column("边界密度 a", justify="right")
    for name, grid in model.occupancy.items():
        mixture = model.angle_model.mixtures.get(name) if model.angle_model else None
        border = model.angle_model.borders.get(name) if model.angle_model else None
        table.add_row(
            name,
            str(int(grid.grid.sum())),
            "-" if mixture is None else ("是" if mixture.converged else "[yellow]否[/yellow]"),
            "-" if border is None else f"{border:.3e}",
        )
    print(table)
    print(f"[green]已写入 {out}[/green]")
