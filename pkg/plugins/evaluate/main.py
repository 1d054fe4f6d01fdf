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
from pose.harness.io import (
    align_frames,
    load_cameras,
    load_observations,
    load_plausibility,
    load_pose_records,
    save_report,
)
from pose.plausibility import eval_metrics, ppp_report

console = Console()
print = console.print


@register_plugin
class EvaluatePlugin(CLIPlugin):
    @property
    def name(self) -> str:
        return "evaluate"

    @property
    def description(self) -> str:
        return "计算 MPJPE、JDR、L_pj、L_bl、PPP 等指标"

    @property
    def commands(self) -> List[Union[typer.Typer, Callable]]:
        app = self.new_app()

        @app.callback()
        def default(
            ctx: typer.Context,
            poses: Annotated[Path, typer.Option("--poses", exists=True, dir_okay=False, help="估计姿态 JSON")] = None,
            gt: Annotated[Path, typer.Option("--gt", exists=True, dir_okay=False, help="真值姿态 JSON")] = None,
            obs: Annotated[Path, typer.Option("--obs", exists=True, dir_okay=False, help="三角化所用的观测 JSON")] = None,
            cameras: Annotated[Path, typer.Option("--cameras", exists=True, dir_okay=False, help="相机 JSON")] = None,
            model: Annotated[Optional[Path], typer.Option("--model", exists=True, dir_okay=False,
                                                          help="合理性模型 JSON")] = None,
            out: Annotated[Path, typer.Option("--out", "-o", dir_okay=False, help="逐帧指标 CSV")] = Path("metrics.csv"),
        ):
            """poses + gt + model → metrics"""
            if ctx.invoked_subcommand is not None:
                return
            if None in (poses, gt, obs, cameras):
                raise typer.BadParameter("需要 --poses、--gt、--obs 与 --cameras")
            run_command(lambda: evaluate(poses, gt, obs, cameras, model, out))

        return [app]


def evaluate(poses_path: Path, gt_path: Path, obs_path: Path, cameras_path: Path,
             model_path: Optional[Path], out: Path) -> None:
    section = get_section("plausibility")
    topology = state.topology
    records, truth, observations = align_frames(load_pose_records(poses_path, topology.root_index),
                                                load_pose_records(gt_path, topology.root_index),
                                                load_observations(obs_path))
    estimated = [r.pose for r in records]
    ground_truth = [r.pose for r in truth]
    cameras = load_cameras(cameras_path)
    plausibility = load_plausibility(model_path) if model_path else None

    betas = (float(section.get("beta_pj", 0.1)), float(section.get("beta_bl", 0.01)),
             float(section.get("beta_ja", 0.01)))
    report = eval_metrics(estimated, ground_truth, observations, cameras, topology,
                          plausibility.angle_model if plausibility else None, betas)
    summary = {"frames": len(estimated), "metrics": report.summary()}
    if plausibility is not None:
        ppp = ppp_report(estimated, plausibility, topology, section.get("ppp_thresholds", [plausibility.threshold]))
        report.ppp = ppp.fractions
        summary = {"frames": len(estimated), "metrics": report.summary(), "plausibility": ppp.to_dict()}
    csv_path, json_path = save_report(report, out, summary)

    table = Table(title=f"评估结果 ({len(estimated)} 帧)")
    table.add_column("指标")
    table.add_column("值", justify="right")
    for key, value in report.summary().items():
        table.add_row(key, f"{value:.4f}")
    print(table)
    print(f"[green]已写入 {csv_path} 与 {json_path}[/green]")
