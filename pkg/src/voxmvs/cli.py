"""
CLI interface for voxmvs.

Run reports go to standard output as key=value lines; status, logging and
errors go to standard error.
"""

import sys
from enum import Enum
from pathlib import Path
from typing import Annotated

import click
import typer
from rich.console import Console
from rich.panel import Panel

from voxmvs import __version__
from voxmvs.core.api import EngineContext
from voxmvs.core.config import PipelineConfig
from voxmvs.core.exceptions import ParseError, VoxError
from voxmvs.core.pipeline import reconstruct as run_reconstruct
from voxmvs.core.training import collect_from_dirs
from voxmvs.predictors.registry import PredictorRegistry
from voxmvs.scene_io import (
    load_manifest,
    load_scene,
    parse_ply,
    read_occgrid,
    read_ply,
    write_occgrid,
)
from voxmvs.stereo.weighting import fit_gate, fit_weightnet, save_gate, save_weightnet
from voxmvs.synth.evaluate import evaluate
from voxmvs.synth.scene import GROUND_TRUTH_NAME, RigSpec, ShapeSpec, generate_scene, save_scene

SYNOPSIS = """\
usage: voxmvs COMMAND [OPTIONS]

commands:
  reconstruct --scene MANIFEST --out PLY [--config FILE] [--occ OCC] [--threads N]
  synth --shape sphere|box --views N --out DIR [--image-size PX] [--seed S]
        [--pair-baseline DEG]
  eval --pred PLY --gt OCC [--eps E]
  fit-weights --scenes DIR --out MODEL [--config FILE] [--epochs N]
  fit-gate --scenes DIR --out MODEL [--config FILE] [--epochs N]
  sweep --scene MANIFEST --gt OCC --param n_v|gamma|tau --values V1,V2,...
  list-predictors [--predictor-dir DIR]
  version
"""

app = typer.Typer(
    name="voxmvs",
    help="voxmvs - volumetric multi-view stereo reconstruction",
    add_completion=False,
    pretty_exceptions_enable=False,
)

# Standard output carries the key=value reports; tables and panels only.
console = Console()

_context: EngineContext | None = None


class ShapeKind(str, Enum):
    sphere = "sphere"
    box = "box"


class SweepParam(str, Enum):
    n_v = "n_v"
    gamma = "gamma"
    tau = "tau"


def get_context() -> EngineContext:
    """Get or create the EngineContext."""
    global _context
    if _context is None:
        _context = EngineContext(config_dir=Path.cwd() / "config")
    return _context


def _registry(predictor_dirs: list[Path] | None) -> PredictorRegistry | None:
    if not predictor_dirs:
        return None
    registry = PredictorRegistry(plugin_dirs=predictor_dirs)
    registry.discover()
    return registry


def _emit(lines: list[str]) -> None:
    for line in lines:
        typer.echo(line)


@app.command()
def version() -> None:
    """Display version information."""
    console.print(Panel(
        f"[bold cyan]voxmvs[/bold cyan] v{__version__}\n"
        f"Volumetric multi-view stereo reconstruction",
        title="Version Info",
        border_style="cyan",
    ))


@app.command()
def list_predictors(
    predictor_dir: Annotated[
        list[Path] | None,
        typer.Option("--predictor-dir", "-p", help="Directory with predictor plugins"),
    ] = None,
) -> None:
    """List registered surface predictors."""
    registry = PredictorRegistry(plugin_dirs=predictor_dir or [])
    registry.discover()
    registry.list_predictors(console)


@app.command()
def reconstruct(
    scene: Annotated[Path, typer.Option("--scene", "-s", help="Scene manifest")],
    out: Annotated[Path, typer.Option("--out", "-o", help="Output PLY file")],
    config: Annotated[
        Path | None, typer.Option("--config", "-c", help="Pipeline configuration file")
    ] = None,
    occ: Annotated[
        Path | None, typer.Option("--occ", help="Also write the occupancy grid here")
    ] = None,
    threads: Annotated[
        int | None, typer.Option("--threads", "-t", min=1, help="Override thread_count")
    ] = None,
    predictor_dir: Annotated[
        list[Path] | None,
        typer.Option("--predictor-dir", "-p", help="Directory with predictor plugins"),
    ] = None,
) -> None:
    """Reconstruct the surface voxels of a scene and write them as PLY."""
    context = get_context()
    pipeline_config = context.load_config(config)
    if threads is not None:
        pipeline_config = pipeline_config.model_copy(update={"thread_count": threads})

    manifest = load_manifest(scene)
    result = run_reconstruct(manifest, pipeline_config, registry=_registry(predictor_dir))

    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(result.ply)
    if occ is not None:
        occ.parent.mkdir(parents=True, exist_ok=True)
        write_occgrid(occ, result.occgrid())

    _emit(result.report.to_lines())
    if result.report.occupied_voxels == 0:
        context.print_warning(
            f"No surface voxels found ({result.report.cubes_accepted} of "
            f"{result.report.cubes_total} cubes accepted); wrote an empty point cloud to {out}"
        )
    else:
        context.print_success(f"{result.report.occupied_voxels} surface voxels written to {out}")


@app.command()
def synth(
    out: Annotated[Path, typer.Option("--out", "-o", help="Output directory")],
    shape: Annotated[ShapeKind, typer.Option("--shape", help="Shape to render")] = ShapeKind.sphere,
    views: Annotated[int, typer.Option("--views", "-n", min=2, help="Number of cameras")] = 8,
    image_size: Annotated[
        int, typer.Option("--image-size", min=8, help="Image side in pixels")
    ] = 256,
    seed: Annotated[int, typer.Option("--seed", help="Texture seed")] = 0,
    voxels_across: Annotated[
        int, typer.Option("--voxels-across", min=4, help="Voxels spanned by the shape")
    ] = 64,
    pair_baseline: Annotated[
        float,
        typer.Option("--pair-baseline", min=0.0, help="Degrees between paired cameras (0: even)"),
    ] = 12.0,
    threads: Annotated[int, typer.Option("--threads", "-t", min=1, help="Render threads")] = 1,
) -> None:
    """Render a synthetic scene with ground truth."""
    context = get_context()
    shape_spec = ShapeSpec(kind="box" if shape is ShapeKind.box else "sphere", texture_seed=seed)
    rig = RigSpec(n_views=views, image_size=image_size, pair_baseline_deg=pair_baseline)
    scene = generate_scene(shape_spec, rig, voxels_across=voxels_across, workers=threads)
    manifest_path = save_scene(scene, out)

    _emit([
        f"manifest={manifest_path}",
        f"ground_truth={out / GROUND_TRUTH_NAME}",
        f"views={len(scene.views)}",
        f"voxel_size={scene.voxel_size!r}",
        f"gt_voxels={int(scene.gt_occ.occ.sum())}",
    ])
    context.print_success(f"Synthetic {shape.value} scene written to {out}")


@app.command(name="eval")
def eval_command(
    pred: Annotated[Path, typer.Option("--pred", help="Reconstructed PLY")],
    gt: Annotated[Path, typer.Option("--gt", help="Ground-truth occupancy grid")],
    eps: Annotated[
        float | None, typer.Option("--eps", help="Distance tolerance (default 2 voxel sizes)")
    ] = None,
) -> None:
    """Score a reconstruction against ground truth."""
    if eps is not None and not eps > 0:
        raise typer.BadParameter("must be > 0", param_hint="--eps")
    predicted = read_ply(pred)
    grid = read_occgrid(gt)
    if grid.origin is None or grid.voxel_size is None:
        raise ParseError(f"{gt}: occupancy grid carries no origin and voxel size")
    tolerance = eps if eps is not None else 2.0 * grid.voxel_size

    report = evaluate(predicted, grid.points(), tolerance)
    _emit(report.to_lines())


@app.command()
def fit_weights(
    scenes: Annotated[list[Path], typer.Option("--scenes", help="Synthetic scene directory")],
    out: Annotated[Path, typer.Option("--out", "-o", help="Output model file")],
    config: Annotated[
        Path | None, typer.Option("--config", "-c", help="Pipeline configuration file")
    ] = None,
    epochs: Annotated[int, typer.Option("--epochs", min=1, help="Training epochs")] = 200,
) -> None:
    """Fit the pair weighting network on synthetic scenes."""
    context = get_context()
    pipeline_config = context.load_config(config)
    samples = collect_from_dirs(scenes, pipeline_config)
    net = fit_weightnet(
        [s.weight_sample() for s in samples], epochs=epochs, seed=pipeline_config.seed
    )
    out.parent.mkdir(parents=True, exist_ok=True)
    save_weightnet(net, out)

    _emit([
        f"samples={len(samples)}",
        f"final_loss={net.loss_history[-1]!r}" if net.loss_history else "final_loss=undefined",
        f"model={out}",
    ])
    context.print_success(f"Weight network written to {out}")


@app.command(name="fit-gate")
def fit_gate_command(
    scenes: Annotated[list[Path], typer.Option("--scenes", help="Synthetic scene directory")],
    out: Annotated[Path, typer.Option("--out", "-o", help="Output model file")],
    config: Annotated[
        Path | None, typer.Option("--config", "-c", help="Pipeline configuration file")
    ] = None,
    epochs: Annotated[int, typer.Option("--epochs", min=1, help="Gradient steps")] = 500,
) -> None:
    """Fit the cube gate on synthetic scenes."""
    context = get_context()
    pipeline_config = context.load_config(config)
    samples = collect_from_dirs(scenes, pipeline_config)
    gate = fit_gate([s.gate_sample() for s in samples], epochs=epochs)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_gate(gate, out)

    _emit([
        f"samples={len(samples)}",
        f"similar={sum(s.similar for s in samples)}",
        f"slope={gate.slope!r}",
        f"intercept={gate.intercept!r}",
        f"model={out}",
    ])
    context.print_success(f"Cube gate written to {out}")


@app.command()
def sweep(
    scene: Annotated[Path, typer.Option("--scene", "-s", help="Scene manifest")],
    gt: Annotated[Path, typer.Option("--gt", help="Ground-truth occupancy grid")],
    param: Annotated[SweepParam, typer.Option("--param", help="Parameter to vary")],
    values: Annotated[str, typer.Option("--values", help="Comma-separated values")],
    config: Annotated[
        Path | None, typer.Option("--config", "-c", help="Pipeline configuration file")
    ] = None,
    eps: Annotated[
        float | None, typer.Option("--eps", help="Distance tolerance (default 2 voxel sizes)")
    ] = None,
) -> None:
    """Rerun reconstruction and evaluation for several values of one parameter."""
    try:
        parsed: list[int | float] = [
            int(v) if param is SweepParam.n_v else float(v) for v in values.split(",") if v.strip()
        ]
    except ValueError as e:
        raise typer.BadParameter(str(e), param_hint="--values") from e
    if not parsed:
        raise typer.BadParameter("no values given", param_hint="--values")

    context = get_context()
    base = context.load_config(config)
    loaded = load_scene(scene)
    grid = read_occgrid(gt)
    if grid.origin is None or grid.voxel_size is None:
        raise ParseError(f"{gt}: occupancy grid carries no origin and voxel size")
    tolerance = eps if eps is not None else 2.0 * grid.voxel_size
    gt_points = grid.points()

    for value in parsed:
        run_config = PipelineConfig.from_mapping({**base.model_dump(), param.value: value})
        result = run_reconstruct(loaded, run_config)
        report = evaluate(parse_ply(result.ply), gt_points, tolerance)
        accuracy = "undefined" if report.accuracy is None else repr(report.accuracy)
        typer.echo(
            f"{param.value}={value!r} occupied_voxels={result.report.occupied_voxels} "
            f"accuracy={accuracy} completeness={report.completeness!r} f_score={report.f_score!r}"
        )


@app.callback(invoke_without_command=True)
def root(
    ctx: typer.Context,
    version_flag: Annotated[
        bool | None,
        typer.Option("--version", "-v", help="Show version and exit"),
    ] = None,
) -> None:
    """
    voxmvs - volumetric multi-view stereo

    Reconstructs surface voxels from calibrated images, renders synthetic test
    scenes and scores reconstructions against ground truth.
    """
    if version_flag:
        version()
        raise typer.Exit()

    if ctx.invoked_subcommand is None:
        typer.echo(SYNOPSIS, err=True)
        raise typer.Exit(code=1)


def cli_main(argv: list[str]) -> int:
    """
    Run the command line and map the outcome to an exit code.

    Returns:
        0 on success, 1 on usage errors, 2 on data errors
    """
    global _context
    if not argv:
        typer.echo(SYNOPSIS, err=True)
        return 1

    try:
        result = app(args=argv, prog_name="voxmvs", standalone_mode=False)
    except click.UsageError as e:
        get_context().print_error(e.format_message())
        typer.echo(SYNOPSIS, err=True)
        return 1
    except click.Abort:
        return 1
    except click.exceptions.Exit as e:
        return e.exit_code
    except (VoxError, OSError) as e:
        get_context().print_error(str(e))
        return 2
    finally:
        if _context is not None:
            _context.close_logging_handlers()
            _context = None
    return result if isinstance(result, int) else 0


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
