"""Three-task evaluation benchmark: refocus, add bokeh, remove bokeh.

Every scene contributes exactly ten samples: two refocus pairs between two
rendered focus settings, four add-bokeh renders of one focus point at fixed
levels, and four remove-bokeh samples that reuse those renders with the
all-in-focus image as the target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .metrics import UndefinedCorrelationError, lvcorr, mae, psnr
from .raster import generate_scene, read_image, write_depth, write_image
from .render import RenderParams, render_fast
from .simulate import focus_set, sample_focus_points

BENCH_MANIFEST = "bench_manifest.jsonl"
ADD_BOKEH_LEVELS = (5.0, 10.0, 15.0, 20.0)
TASKS = ("refocus", "add_bokeh", "remove_bokeh")


@dataclass(frozen=True)
class BenchmarkSample:
    scene_id: str
    sample_id: str
    task: str
    input_path: str
    target_path: str
    f_x: float
    f_y: float
    bokeh: float
    degenerate: bool = False


@dataclass(frozen=True)
class BenchmarkScene:
    scene_id: str
    aif_image_path: str
    depth_path: str
    refocus_samples: tuple
    add_bokeh_samples: tuple
    remove_bokeh_samples: tuple

    def __post_init__(self):
        counts = (len(self.refocus_samples), len(self.add_bokeh_samples), len(self.remove_bokeh_samples))
        if counts != (2, 4, 4):
            raise ValueError(f"scene {self.scene_id} has sample counts {counts}, expected (2, 4, 4)")

    @property
    def samples(self) -> tuple:
        return self.refocus_samples + self.add_bokeh_samples + self.remove_bokeh_samples


def _pick_refocus_points(depth, rng) -> tuple:
    """Two focus points, on distinct depth layers when the scene has them."""
    layers = np.unique(depth.data)
    degenerate = layers.size < 2
    if degenerate:
        chosen = [layers[0], layers[0]]
    else:
        idx = rng.choice(layers.size, size=2, replace=False)
        chosen = [layers[i] for i in idx]
    points = []
    for d in chosen:
        pts = sample_focus_points(focus_set(depth, float(d), 1e-6), rng, count=1)
        points.append(pts[0])
    return points, degenerate


def build_benchmark(scene_specs, out_dir, seed: int = 0, renderer=render_fast) -> list:
    """Render and persist the benchmark; returns the scene records."""
    specs = list(scene_specs)
    if not specs:
        raise ValueError("need at least one scene spec")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    scenes = []
    for spec in specs:
        scene_id = f"scene_{spec.seed:04d}"
        scene_dir = out_dir / scene_id
        scene_dir.mkdir(parents=True, exist_ok=True)
        img, depth = generate_scene(spec)

        aif_rel = f"{scene_id}/aif.png"
        depth_rel = f"{scene_id}/depth.png"
        write_image(img, out_dir / aif_rel)
        write_depth(depth, out_dir / depth_rel)

        # refocus: two settings rendered from the all-in-focus image
        (pt_a, pt_b), degenerate = _pick_refocus_points(depth, rng)
        lvl_a, lvl_b = (float(v) for v in rng.choice(np.arange(4, 21), size=2, replace=False))
        settings = [(pt_a, lvl_a), (pt_b, lvl_b)]
        render_rels = []
        for k, ((fx, fy), lvl) in enumerate(settings):
            x = int(round(fx * (depth.width - 1)))
            y = int(round(fy * (depth.height - 1)))
            params = RenderParams(focus_depth=float(depth.data[y, x]), bokeh_level=lvl)
            rel = f"{scene_id}/refocus_{k}.png"
            write_image(renderer(img, depth, params), out_dir / rel)
            render_rels.append(rel)

        refocus_samples = []
        for k, (src, dst) in enumerate(((0, 1), (1, 0))):
            (fx, fy), lvl = settings[dst]
            refocus_samples.append(
                BenchmarkSample(
                    scene_id=scene_id,
                    sample_id=f"{scene_id}_refocus_{k}",
                    task="refocus",
                    input_path=render_rels[src],
                    target_path=render_rels[dst],
                    f_x=fx, f_y=fy, bokeh=lvl,
                    degenerate=degenerate,
                )
            )

        # add bokeh: one point, four levels, input is the all-in-focus image
        (add_pt,) = sample_focus_points(
            focus_set(depth, float(rng.choice(np.unique(depth.data))), 1e-6), rng, count=1
        )
        x = int(round(add_pt[0] * (depth.width - 1)))
        y = int(round(add_pt[1] * (depth.height - 1)))
        add_params_depth = float(depth.data[y, x])
        add_samples, remove_samples = [], []
        for lvl in ADD_BOKEH_LEVELS:
            params = RenderParams(focus_depth=add_params_depth, bokeh_level=lvl)
            rel = f"{scene_id}/bokeh_b{lvl:g}.png"
            write_image(renderer(img, depth, params), out_dir / rel)
            add_samples.append(
                BenchmarkSample(
                    scene_id=scene_id,
                    sample_id=f"{scene_id}_add_b{lvl:g}",
                    task="add_bokeh",
                    input_path=aif_rel,
                    target_path=rel,
                    f_x=add_pt[0], f_y=add_pt[1], bokeh=lvl,
                )
            )
            # remove bokeh reuses the render as input; target is all-in-focus
            remove_samples.append(
                BenchmarkSample(
                    scene_id=scene_id,
                    sample_id=f"{scene_id}_remove_b{lvl:g}",
                    task="remove_bokeh",
                    input_path=rel,
                    target_path=aif_rel,
                    f_x=add_pt[0], f_y=add_pt[1], bokeh=0.0,
                )
            )

        scenes.append(
            BenchmarkScene(
                scene_id=scene_id,
                aif_image_path=aif_rel,
                depth_path=depth_rel,
                refocus_samples=tuple(refocus_samples),
                add_bokeh_samples=tuple(add_samples),
                remove_bokeh_samples=tuple(remove_samples),
            )
        )

    _write_bench_manifest(scenes, out_dir / BENCH_MANIFEST)
    return scenes


def _write_bench_manifest(scenes, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for scene in scenes:
            for s in scene.samples:
                record = {
                    "scene_id": s.scene_id,
                    "sample_id": s.sample_id,
                    "task": s.task,
                    "input_path": s.input_path,
                    "target_path": s.target_path,
                    "f_x": s.f_x,
                    "f_y": s.f_y,
                    "bokeh": s.bokeh,
                    "degenerate": s.degenerate,
                    "aif_image_path": scene.aif_image_path,
                    "depth_path": scene.depth_path,
                }
                fh.write(json.dumps(record) + "\n")


def load_benchmark(bench_dir) -> list:
    """Rebuild the BenchmarkScene records from a benchmark directory."""
    bench_dir = Path(bench_dir)
    rows: dict[str, dict] = {}
    with open(bench_dir / BENCH_MANIFEST, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            sample = BenchmarkSample(
                scene_id=record["scene_id"],
                sample_id=record["sample_id"],
                task=record["task"],
                input_path=record["input_path"],
                target_path=record["target_path"],
                f_x=record["f_x"],
                f_y=record["f_y"],
                bokeh=record["bokeh"],
                degenerate=record.get("degenerate", False),
            )
            bucket = rows.setdefault(
                record["scene_id"],
                {
                    "aif": record["aif_image_path"],
                    "depth": record["depth_path"],
                    "refocus": [], "add_bokeh": [], "remove_bokeh": [],
                },
            )
            bucket[sample.task].append(sample)
    scenes = []
    for scene_id, bucket in rows.items():
        scenes.append(
            BenchmarkScene(
                scene_id=scene_id,
                aif_image_path=bucket["aif"],
                depth_path=bucket["depth"],
                refocus_samples=tuple(bucket["refocus"]),
                add_bokeh_samples=tuple(bucket["add_bokeh"]),
                remove_bokeh_samples=tuple(bucket["remove_bokeh"]),
            )
        )
    return scenes


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class TaskReport:
    task: str
    count: int = 0
    mae_mean: float = 0.0
    psnr_mean: float = 0.0


@dataclass
class EvalReport:
    tasks: dict
    overall_mae: float
    overall_psnr: float
    lvcorr_mean: float | None
    lvcorr_per_scene: dict
    evaluated: int
    missing: list = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "tasks": {
                t: {"count": r.count, "mae": r.mae_mean, "psnr": r.psnr_mean}
                for t, r in self.tasks.items()
            },
            "overall": {"count": self.evaluated, "mae": self.overall_mae, "psnr": self.overall_psnr},
            "lvcorr": {"mean": self.lvcorr_mean, "per_scene": self.lvcorr_per_scene},
            "missing": self.missing,
        }
        return json.dumps(payload, indent=2)

    def format_table(self) -> str:
        lines = [f"{'task':<14}{'count':>6}{'MAE':>10}{'PSNR dB':>10}"]
        for t, r in self.tasks.items():
            lines.append(f"{t:<14}{r.count:>6}{r.mae_mean:>10.4f}{r.psnr_mean:>10.2f}")
        lines.append(f"{'overall':<14}{self.evaluated:>6}{self.overall_mae:>10.4f}{self.overall_psnr:>10.2f}")
        if self.lvcorr_mean is not None:
            lines.append(f"LVCorr (add-bokeh): {self.lvcorr_mean:.4f}")
        if self.missing:
            lines.append(f"missing predictions: {', '.join(self.missing)}")
        return "\n".join(lines)


def read_prediction_manifest(path) -> dict:
    """Map sample_id -> absolute image path from a JSONL prediction manifest."""
    path = Path(path)
    base = path.parent
    predictions = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            predictions[record["sample_id"]] = str(base / record["image_path"])
    return predictions


def evaluate(predictions: dict, bench_dir, scenes=None) -> EvalReport:
    """Score predictions (sample_id -> image path) against a benchmark."""
    bench_dir = Path(bench_dir)
    scenes = load_benchmark(bench_dir) if scenes is None else scenes

    missing = []
    per_task: dict[str, list] = {t: [] for t in TASKS}
    lv_per_scene: dict[str, float] = {}

    for scene in scenes:
        add_series = []
        for sample in scene.samples:
            pred_path = predictions.get(sample.sample_id)
            if pred_path is None or not Path(pred_path).exists():
                missing.append(sample.sample_id)
                continue
            pred = read_image(pred_path)
            target = read_image(bench_dir / sample.target_path)
            per_task[sample.task].append((mae(pred, target), psnr(pred, target)))
            if sample.task == "add_bokeh":
                add_series.append((sample.bokeh, pred))
        if len(add_series) >= 3:
            try:
                lv_per_scene[scene.scene_id] = lvcorr(add_series)
            except UndefinedCorrelationError:
                pass

    tasks = {}
    all_scores = []
    for task, scores in per_task.items():
        report = TaskReport(task=task, count=len(scores))
        if scores:
            report.mae_mean = float(np.mean([s[0] for s in scores]))
            report.psnr_mean = float(np.mean([s[1] for s in scores]))
        tasks[task] = report
        all_scores.extend(scores)

    return EvalReport(
        tasks=tasks,
        overall_mae=float(np.mean([s[0] for s in all_scores])) if all_scores else 0.0,
        overall_psnr=float(np.mean([s[1] for s in all_scores])) if all_scores else 0.0,
        lvcorr_mean=float(np.mean(list(lv_per_scene.values()))) if lv_per_scene else None,
        lvcorr_per_scene=lv_per_scene,
        evaluated=len(all_scores),
        missing=missing,
    )
