from pathlib import Path
from typing import Callable, List, Optional, Union

import numpy as np
import typer
from rich.console import Console
from rich.table import Table
from typing_extensions import Annotated

from configs import get_section, hop_table
from plugin.base import CLIPlugin
from plugin.decorators import register_plugin
from plugin.runtime import run_command, state
from pose.harness import (
    CorruptionSpec,
    PipelineConfig,
    PoseSampler,
    RenderConfig,
    RigConfig,
    TRAIN_STREAM,
    build_scene,
    corrupt_observations,
    gen_poses,
    gen_rig,
)
from pose.harness.io import save_sweep
from pose.harness.sweep import SWEEP_KINDS, run_sweep
from pose.mvf import FusionConfig
from pose.plausibility import fit_plausibility_model
from share.util import load_json

console = Console()
print = console.print


@register_plugin
class SweepPlugin(CLIPlugin):
    @property
    def name(self) -> str:
        return "sweep"

    @property
    def description(self) -> str:
        return "在同一合成场景上扫描 PCA 维数、λ、hop 组合、视角数或匹配策略"

    @property
    def commands(self) -> List[Union[typer.Typer, Callable]]:
        app = self.new_app()

        @app.callback()
        def default(
            ctx: typer.Context,
            param: Annotated[str, typer.Option("--param", "-p", help=f"扫描因素: {' | '.join(SWEEP_KINDS)}")] = None,
            value: Annotated[Optional[List[str]], typer.Option("--value", "-v", help="取值，可重复")] = None,
            mode: Annotated[str, typer.Option("--mode", "-m", help="lt | at | ht")] = "ht",
            frames: Annotated[Optional[int], typer.Option("--frames", min=1, help="测试帧数")] = None,
            train_frames: Annotated[Optional[int], typer.Option("--train-frames", min=1,
                                                                help="拟合先验的训练姿态数")] = None,
            cameras: Annotated[Optional[int], typer.Option("--cameras", min=2, help="相机数")] = None,
            fcl_weights: Annotated[Optional[Path], typer.Option("--fcl-weights", exists=True, dir_okay=False,
                                                                help="fcl 权重向量 JSON (长度 2N)")] = None,
            out: Annotated[Optional[Path], typer.Option("--out", "-o", dir_okay=False, help="扫描结果 CSV")] = None,
        ):
            """param + values → sweep CSV"""
            if ctx.invoked_subcommand is not None:
                return
            if param is None or not value:
                raise typer.BadParameter("需要 --param 与至少一个 --value")
            run_command(lambda: sweep(param, value, mode, frames, train_frames, cameras, fcl_weights, out))

        return [app]


def sweep(param: str, values: List[str], mode: str, frames: Optional[int], train_frames: Optional[int],
          cameras: Optional[int], fcl_path: Optional[Path], out: Optional[Path]) -> None:
    seed = state.settings.seed
    topology = state.topology
    section = get_section("sweep")
    anatomy = get_section("anatomy")
    scene_cfg = get_section("scene")
    plausibility_cfg = get_section("plausibility")
    n_frames = frames or int(section.get("frames", 50))
    n_train = train_frames or int(section.get("train_frames", 2000))
    out = out or Path(section.get("out", "sweep.csv"))

    weights = np.asarray(load_json(fcl_path), dtype=float) if fcl_path else None
    config = PipelineConfig.from_config(
        get_section("solver"), get_section("mvf"), plausibility_cfg, anatomy,
        mode=mode, threads=state.settings.threads,
        fusion=FusionConfig.from_config(get_section("mvf"), fcl_weights=weights),
    )

    rig = RigConfig.from_config(get_section("rig"), n_cameras=cameras)
    rig_cameras = gen_rig(rig.n_cameras, rig.radius_mm, rig.height_range_mm, rig.image_size,
                          seed, rig.focal_scale)
    sampler = PoseSampler(topology)
    scene = build_scene(rig_cameras, gen_poses(sampler, n_frames, seed), seed, RenderConfig.from_config(scene_cfg))
    observations = corrupt_observations(scene, CorruptionSpec.from_config(get_section("corruption"), seed=seed))
    train_poses = gen_poses(sampler, n_train, seed, index=TRAIN_STREAM)
    plausibility = fit_plausibility_model(
        train_poses, topology,
        bin_deg=float(plausibility_cfg.get("bin_deg", 5.0)),
        dilate=int(plausibility_cfg.get("dilate", 1)),
        threshold=float(plausibility_cfg.get("threshold", 0.2)),
        fit_angles=False,
    )

    hops = [int(h) for h in anatomy.get("hops", [0])]
    dim_table, lam_table = hop_table(anatomy, "dims"), hop_table(anatomy, "lambdas")
    results = run_sweep(
        param, values, scene, observations, topology, train_poses,
        dims={h: int(dim_table[h]) for h in hops},
        lambdas={h: float(lam_table.get(h, 0.0)) for h in hops},
        config=config, plausibility=plausibility, vertical=anatomy.get("vertical", "z"),
    )
    csv_path, json_path = save_sweep(param, [(r.setting, r.metrics()) for r in results], out)

    table = Table(title=f"扫描 {param} ({mode}, {n_frames} 帧, {rig.n_cameras} 相机)")
    table.add_column(param)
    for metric in ("MPJPE", "JDR", "PPP@0.2"):
        table.add_column(metric, justify="right")
    for r in results:
        metrics = r.metrics()
        table.add_row(r.setting, *(f"{metrics[m]:.4f}" if m in metrics else "-" for m in ("MPJPE", "JDR", "PPP@0.2")))
    print(table)
    print(f"[green]已写入 {csv_path} 与 {json_path}[/green]")
