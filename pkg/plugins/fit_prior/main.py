from pathlib import Path
from typing import Callable, List, Optional, Union

import typer
from rich.console import Console
from rich.table import Table
from typing_extensions import Annotated

from configs import get_section, hop_table
from plugin.base import CLIPlugin
from plugin.decorators import register_plugin
from plugin.runtime import parse_hop_values, run_command, state
from pose.anatomy import build_prior
from pose.core.errors import ValidationError
from pose.harness.io import load_poses, save_prior

console = Console()
print = console.print


@register_plugin
class FitPriorPlugin(CLIPlugin):
    @property
    def name(self) -> str:
        return "fit-prior"

    @property
    def description(self) -> str:
        return "在训练姿态上拟合逐 hop 的 PCA 解剖先验"

    @property
    def commands(self) -> List[Union[typer.Typer, Callable]]:
        app = self.new_app()

        @app.callback()
        def default(
            ctx: typer.Context,
            poses: Annotated[Path, typer.Argument(exists=True, dir_okay=False, help="训练姿态 JSON")] = None,
            out: Annotated[Path, typer.Option("--out", "-o", dir_okay=False, help="先验 JSON 输出路径")] = Path("prior.json"),
            hop: Annotated[Optional[List[int]], typer.Option("--hop", help="参与的 hop，可重复")] = None,
            dim: Annotated[Optional[List[str]], typer.Option("--dim", help="HOP=D，PCA 维数")] = None,
            lam: Annotated[Optional[List[str]], typer.Option("--lambda", help="HOP=λ，写入文件的权重")] = None,
            no_normalize: Annotated[bool, typer.Option("--no-normalize", help="跳过朝向归一化")] = False,
        ):
            """poses → prior JSON"""
            if ctx.invoked_subcommand is not None:
                return
            if poses is None:
                raise typer.BadParameter("需要训练姿态文件", param_hint="POSES")
            run_command(lambda: fit(poses, out, hop, dim, lam, not no_normalize))

        return [app]


def fit(poses_path: Path, out: Path, hops: Optional[List[int]], dims: Optional[List[str]],
        lambdas: Optional[List[str]], normalize: bool) -> None:
    anatomy = get_section("anatomy")
    dim_table = {**hop_table(anatomy, "dims"), **parse_hop_values(dims, int)}
    lam_table = {**hop_table(anatomy, "lambdas"), **parse_hop_values(lambdas)}
    hops = hops or [int(h) for h in anatomy.get("hops", [0])]

    missing = [h for h in hops if h not in dim_table]
    if missing:
        raise ValidationError(f"hop {missing} 缺少 PCA 维数, 请用 --dim HOP=D 指定")

    topology = state.topology
    poses = load_poses(poses_path)
    prior = build_prior(
        poses, topology,
        dims={h: int(dim_table[h]) for h in hops},
        lambdas={h: float(lam_table.get(h, 0.0)) for h in hops},
        normalize=normalize,
        vertical=anatomy.get("vertical", "z"),
    )
    save_prior(prior, out)

    table = Table(title=f"PCA 先验 ({len(poses)} 个训练姿态)")
    table.add_column("hop", justify="right")
    table.add_column("D", justify="right")
    table.add_column("λ", justify="right")
    table.add_column("解释方差", justify="right")
    for h, entry in sorted(prior.entries.items()):
        table.add_row(str(h), str(entry.pca.dim), f"{entry.lam:g}", f"{entry.pca.explained_variance:.1%}")
    print(table)
    print(f"[green]已写入 {out}[/green]")
