from pathlib import Path
from typing import Callable, List, Optional, Union

import typer
from rich.console import Console
from rich.panel import Panel
from rich.progress import track
from typing_extensions import Annotated

from configs import get_section
from plugin.base import CLIPlugin
from plugin.decorators import register_plugin
from plugin.runtime import run_command, state
from pose.harness import (
    CorruptionSpec,
    PoseSampler,
    RenderConfig,
    RigConfig,
    TRAIN_STREAM,
    build_scene,
    corrupt_observations,
    gen_poses,
    gen_rig,
)
from pose.harness.io import load_prior, save_cameras, save_maps, save_observations, save_poses

console = Console()
print = console.print


@register_plugin
class SynthPlugin(CLIPlugin):
    @property
    def name(self) -> str:
        return "synth"

    @property
    def description(self) -> str:
        return "生成合成多相机场景、真值姿态与带噪观测"

    @property
    def commands(self) -> List[Union[typer.Typer, Callable]]:
        app = self.new_app()

        @app.callback()
        def default(
            ctx: typer.Context,
            out: Annotated[Path, typer.Option("--out", "-o", file_okay=False, help="输出目录")],
            frames: Annotated[Optional[int], typer.Option("--frames", min=1, help="帧数")] = None,
            cameras: Annotated[Optional[int], typer.Option("--cameras", min=1, help="相机数")] = None,
            sigma: Annotated[Optional[float], typer.Option("--sigma", min=0.0, help="2D 高斯噪声标准差 (px)")] = None,
            outliers: Annotated[Optional[float], typer.Option("--outliers", help="离群点比例")] = None,
            occlusion: Annotated[Optional[float], typer.Option("--occlusion", help="遮挡比例")] = None,
            with_maps: Annotated[bool, typer.Option("--with-maps", help="同时写出热图与特征图张量")] = False,
            train_frames: Annotated[int, typer.Option("--train-frames", min=0,
                                                      help="额外生成的训练姿态数 (0 表示不生成)")] = 0,
            prior: Annotated[Optional[Path], typer.Option("--prior", exists=True, dir_okay=False,
                                                          help="从 hop-0 先验采样姿态，缺省使用运动学采样器")] = None,
        ):
            """生成 cameras.json、gt_poses.json、observations.json 等文件"""
            if ctx.invoked_subcommand is not None:
                return
            run_command(lambda: synthesize(out, frames, cameras, sigma, outliers, occlusion,
                                           with_maps, train_frames, prior))

        return [app]


def synthesize(out: Path, frames: Optional[int], cameras: Optional[int], sigma: Optional[float],
               outliers: Optional[float], occlusion: Optional[float], with_maps: bool,
               train_frames: int, prior_path: Optional[Path]) -> None:
    seed = state.settings.seed
    topology = state.topology
    scene_cfg = get_section("scene")
    n_frames = frames or int(scene_cfg.get("frames", 100))

    rig = RigConfig.from_config(get_section("rig"), n_cameras=cameras)
    rig_cameras = gen_rig(rig.n_cameras, rig.radius_mm, rig.height_range_mm, rig.image_size,
                          seed, rig.focal_scale)
    source = load_prior(prior_path, topology) if prior_path else PoseSampler(topology)
    poses = gen_poses(source, n_frames, seed)
    scene = build_scene(rig_cameras, poses, seed, RenderConfig.from_config(scene_cfg))

    spec = CorruptionSpec.from_config(get_section("corruption"), sigma=sigma, outlier_rate=outliers,
                                      occlusion_rate=occlusion, seed=seed)
    observations = corrupt_observations(scene, spec)

    out.mkdir(parents=True, exist_ok=True)
    save_cameras(rig_cameras, out / "cameras.json")
    save_poses(poses, out / "gt_poses.json")
    save_observations(scene.true_observations(), out / "true_observations.json")
    save_observations(observations, out / "observations.json")
    if train_frames:
        save_poses(gen_poses(source, train_frames, seed, index=TRAIN_STREAM), out / "train_poses.json")
    if with_maps:
        for obs in track(observations, description="渲染热图与特征图", console=console):
            save_maps(out / "maps", obs.frame, scene.heatmaps(obs), scene.feature_maps(obs.frame))

    print(Panel.fit(
        f"[bold]种子[/bold] {seed}   [bold]相机[/bold] {rig.n_cameras}   [bold]帧[/bold] {n_frames}\n"
        f"噪声 σ={spec.sigma} px, 离群 {spec.outlier_rate:.0%}, 遮挡 {spec.occlusion_rate:.0%}\n"
        f"输出目录: {out}",
        title="合成场景",
        border_style="green",
    ))
