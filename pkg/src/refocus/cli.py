"""Command-line entry points for the refocus pipeline.

Exit codes: 0 success, 2 usage error, 1 runtime error.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import benchmark as bench_mod
from . import flow as flow_mod
from .raster import (
    DecodeError,
    RasterImage,
    SceneSpec,
    generate_scene,
    read_depth,
    read_image,
    write_depth,
    write_image,
)
from .render import refocus_classical
from .simulate import (
    PERTURB_KINDS,
    perturb_depth,
    simulate_variants,
    write_manifest,
)
from .stacking import stack_blend, stack_mask


@click.group()
def cli():
    """Depth-guided refocusing toolkit."""


def _runtime_guard(fn):
    """Translate runtime failures into exit code 1 with a clean message."""
    import functools

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, OSError, DecodeError) as exc:
            raise click.ClickException(str(exc))

    return wrapper


def _parse_float_list(text: str | None) -> list[float] | None:
    if text is None:
        return None
    return [float(tok) for tok in text.replace(",", " ").split()]


@cli.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--depth", "depth_path", required=True, type=click.Path(exists=True))
@click.option("--fx", required=True, type=float, help="normalized focus x in [0, 1]")
@click.option("--fy", required=True, type=float, help="normalized focus y in [0, 1]")
@click.option("--bokeh", required=True, type=float)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--scale", default=1.0, type=float, help="radius scale per bokeh unit")
@click.option("--gamma", default=None, type=float,
              help="linearize with this gamma before rendering, re-encode after")
@_runtime_guard
def render(image_path, depth_path, fx, fy, bokeh, out_path, scale, gamma):
    """Refocus one image at a clicked point and bokeh level."""
    img = read_image(image_path)
    depth = read_depth(depth_path)
    if gamma is not None and gamma != 1.0:
        linear = RasterImage(np.power(img.data, gamma))
        rendered = refocus_classical(linear, depth, fx, fy, bokeh, radius_scale=scale)
        rendered = RasterImage(np.power(rendered.data, 1.0 / gamma))
    else:
        rendered = refocus_classical(img, depth, fx, fy, bokeh, radius_scale=scale)
    write_image(rendered, out_path)
    click.echo(f"wrote {out_path}")


@cli.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--depth", "depth_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--planes", default=None, help="comma-separated focus depths (default: 0.0..1.0 step 0.05)")
@click.option("--levels", default=None, help="comma-separated bokeh levels (default: 1..20)")
@click.option("--seed", default=0, type=int)
@click.option("--scene-id", default="scene", show_default=True)
@_runtime_guard
def simulate(image_path, depth_path, out_dir, planes, levels, seed, scene_id):
    """Render the bokeh-variant grid for one image and write a manifest."""
    img = read_image(image_path)
    depth = read_depth(depth_path)
    variants = simulate_variants(
        img,
        depth,
        _parse_float_list(planes),
        _parse_float_list(levels),
        out_dir=out_dir,
        scene_id=scene_id,
        seed=seed,
    )
    manifest_path = Path(out_dir) / "manifest.jsonl"
    write_manifest(variants, manifest_path)
    click.echo(f"wrote {len(variants)} variants; manifest at {manifest_path}")


@cli.command()
@click.option("--a", "a_path", required=True, type=click.Path(exists=True))
@click.option("--b", "b_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--sigma", default=2.0, type=float, show_default=True,
              help="Gaussian smoothing of the sharpness maps")
@_runtime_guard
def stack(a_path, b_path, out_path, sigma):
    """Focus-stack two differently focused shots of the same scene."""
    img_a = read_image(a_path)
    img_b = read_image(b_path)
    mask = stack_mask(img_a, img_b, smooth_sigma=sigma)
    write_image(stack_blend(img_a, img_b, mask), out_path)
    click.echo(f"wrote {out_path}")


@cli.command(name="train-toy")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--steps", required=True, type=int)
@click.option("--out-checkpoint", required=True, type=click.Path())
@click.option("--lambda", "lambda_stack", default=0.1, type=float, show_default=True)
@click.option("--dropout", default=0.5, type=float, show_default=True)
@click.option("--seed", default=0, type=int)
@click.option("--batch", default=8, type=int, show_default=True)
@click.option("--lr", default=1e-3, type=float, show_default=True)
@click.option("--optimizer", default="momentum", type=click.Choice(["momentum", "sgd", "adam"]),
              show_default=True)
@_runtime_guard
def train_toy(manifest_path, steps, out_checkpoint, lambda_stack, dropout, seed, batch, lr, optimizer):
    """Train the toy velocity predictor on a simulated-variant manifest."""
    scenes = flow_mod.load_training_scenes(manifest_path)
    if not scenes:
        raise ValueError(f"manifest {manifest_path} holds no scenes")
    channels = next(iter(scenes[0].images.values())).shape[2]
    model = flow_mod.VelocityPredictor(image_channels=channels, seed=seed)
    config = flow_mod.TrainConfig(
        steps=steps, batch=batch, lr=lr, seed=seed,
        lambda_stack=lambda_stack, depth_dropout_p=dropout, optimizer=optimizer,
    )
    trainer = flow_mod.Trainer(model, config)
    history = trainer.train(scenes)
    flow_mod.save_checkpoint(model, out_checkpoint)
    click.echo(
        f"trained {steps} steps; flow loss {history[0].l_flow:.4f} -> {history[-1].l_flow:.4f}; "
        f"depth dropout {trainer.dropout_fraction:.3f}; checkpoint at {out_checkpoint}"
    )


@cli.command(name="bench")
@click.option("--scenes", "n_scenes", required=True, type=int)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--seed", default=0, type=int)
@click.option("--size", default=64, type=int, show_default=True, help="scene width and height")
@_runtime_guard
def bench(n_scenes, out_dir, seed, size):
    """Build the three-task benchmark from procedural scenes."""
    specs = make_scene_specs(n_scenes, seed, size)
    scenes = bench_mod.build_benchmark(specs, out_dir, seed=seed)
    click.echo(f"built {len(scenes)} scenes with {sum(len(s.samples) for s in scenes)} samples")


def make_scene_specs(n: int, seed: int, size: int = 64) -> list[SceneSpec]:
    """Varied multi-layer scene specs for benchmarks and smoke runs."""
    rng = np.random.default_rng(seed)
    specs = []
    for i in range(n):
        layer_count = int(rng.integers(2, 5))
        depths = np.sort(rng.choice(np.round(np.linspace(0.1, 0.9, 9), 2),
                                    size=layer_count, replace=False))
        specs.append(
            SceneSpec(
                seed=seed + i,
                layer_count=layer_count,
                texture_kind="mixed",
                layer_depths=tuple(float(d) for d in depths),
                width=size,
                height=size,
            )
        )
    return specs


@cli.command(name="eval")
@click.option("--pred-manifest", required=True, type=click.Path(exists=True))
@click.option("--bench-dir", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
@_runtime_guard
def eval_cmd(pred_manifest, bench_dir, report_path):
    """Score a prediction manifest against a benchmark directory."""
    predictions = bench_mod.read_prediction_manifest(pred_manifest)
    report = bench_mod.evaluate(predictions, bench_dir)
    Path(report_path).write_text(report.to_json())
    click.echo(report.format_table())
    if report.missing:
        raise click.ClickException(f"{len(report.missing)} samples had no prediction")


@cli.command(name="perturb-depth")
@click.option("--depth", "depth_path", required=True, type=click.Path(exists=True))
@click.option("--kind", required=True, type=click.Choice(list(PERTURB_KINDS)))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", default=0, type=int)
@_runtime_guard
def perturb_depth_cmd(depth_path, kind, out_path, seed):
    """Apply one depth perturbation and write the result."""
    depth = read_depth(depth_path)
    perturbed = perturb_depth(depth, kind, np.random.default_rng(seed))
    write_depth(perturbed, out_path)
    click.echo(f"wrote {out_path}")


@cli.command()
@click.option("--port", default=8000, type=int, show_default=True)
@click.option("--scene-dir", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--static-dir", default=None, type=click.Path(),
              help="browser client assets served under / (default: ./frontend/dist if present)")
@_runtime_guard
def serve(port, scene_dir, host, static_dir):
    """Start the interactive refocus HTTP service."""
    from .service import run_server

    if static_dir is None:
        candidate = Path("frontend") / "dist"
        static_dir = candidate if candidate.is_dir() else None
    run_server(scene_dir, port=port, host=host, static_dir=static_dir)


@cli.command(name="make-scene")
@click.option("--seed", default=0, type=int)
@click.option("--layers", default=3, type=int, show_default=True)
@click.option("--size", default=128, type=int, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--scene-id", default=None)
@_runtime_guard
def make_scene(seed, layers, size, out_dir, scene_id):
    """Generate one procedural scene (image + depth) for demos and the server."""
    spec = make_scene_specs(1, seed, size)[0]
    if layers != spec.layer_count:
        rng = np.random.default_rng(seed)
        depths = np.sort(rng.choice(np.round(np.linspace(0.1, 0.9, 9), 2), size=layers, replace=False))
        spec = SceneSpec(seed=seed, layer_count=layers, texture_kind="mixed",
                         layer_depths=tuple(float(d) for d in depths), width=size, height=size)
    img, depth = generate_scene(spec)
    scene_id = scene_id or f"procedural_{seed:04d}"
    scene_dir = Path(out_dir) / scene_id
    scene_dir.mkdir(parents=True, exist_ok=True)
    write_image(img, scene_dir / "image.png")
    write_depth(depth, scene_dir / "depth.png")
    click.echo(f"wrote scene {scene_id} under {scene_dir}")


def main() -> int:
    try:
        return cli.main(standalone_mode=True)
    except SystemExit as exc:  # click already printed the message
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
