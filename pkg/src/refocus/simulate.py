"""DoF-pair dataset simulation: focus-point sets, the plane-by-level variant
grid, sharpness filtering, manifest persistence, pair sampling, and depth
perturbations for robustness experiments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .raster import DepthMap, RasterImage, laplacian_variance, write_depth, write_image
from .render import RenderParams, render_fast
from .stacking import StackMask

MANIFEST_SCHEMA_VERSION = 1
DEFAULT_FOCUS_EPS = 0.025
MAX_FOCUS_SAMPLES = 8
AIF_SENTINEL = "aif"


def default_planes() -> list[float]:
    """The 21 focus planes 0.00, 0.05, ..., 1.00."""
    return [round(i * 0.05, 2) for i in range(21)]


def default_bokeh_levels() -> list[float]:
    """Bokeh levels 1 through 20."""
    return [float(b) for b in range(1, 21)]


@dataclass(frozen=True)
class CameraCondition:
    """Normalized focus point plus bokeh level: the conditioning triple."""

    f_x: float
    f_y: float
    b: float

    def __post_init__(self):
        if not (0.0 <= self.f_x <= 1.0 and 0.0 <= self.f_y <= 1.0):
            raise ValueError("focus point coordinates must lie in [0, 1]")
        if self.b < 0.0:
            raise ValueError("bokeh level must be >= 0")


@dataclass(frozen=True)
class DofVariant:
    """One simulated variant of a scene; ``focus_depth`` None means all-in-focus."""

    scene_id: str
    focus_depth: float | None
    bokeh_level: float
    image_path: str
    depth_path: str
    focus_point_samples: tuple = ()
    source_kind: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(
            self,
            "focus_point_samples",
            tuple((float(x), float(y)) for x, y in self.focus_point_samples),
        )
        if self.source_kind not in ("photo", "synthetic"):
            raise ValueError(f"unknown source kind {self.source_kind!r}")


@dataclass(frozen=True)
class SamplerSchedule:
    """Linear ramp for the probability of drawing synthetic-source images."""

    p_synth_start: float = 0.5
    p_synth_end: float = 1.0
    ramp_begin_frac: float = 1000 / 3600
    ramp_end_frac: float = 2500 / 3600

    def __post_init__(self):
        if not 0.0 <= self.ramp_begin_frac <= self.ramp_end_frac <= 1.0:
            raise ValueError("need 0 <= ramp_begin_frac <= ramp_end_frac <= 1")
        for p in (self.p_synth_start, self.p_synth_end):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")


def focus_set(depth: DepthMap, d: float, eps: float = DEFAULT_FOCUS_EPS) -> StackMask:
    """Mask of pixels whose depth lies strictly within eps of the focus depth."""
    if not 0.0 <= d <= 1.0:
        raise ValueError("focus depth must lie in [0, 1]")
    if eps <= 0.0:
        raise ValueError("eps must be > 0")
    return StackMask((np.abs(depth.data - d) < eps).astype(np.float64))


def _normalize_point(x: int, y: int, width: int, height: int) -> tuple[float, float]:
    f_x = x / (width - 1) if width > 1 else 0.0
    f_y = y / (height - 1) if height > 1 else 0.0
    return float(f_x), float(f_y)


def sample_focus_points(
    mask: StackMask, rng: np.random.Generator, count: int = MAX_FOCUS_SAMPLES
) -> tuple:
    """Up to ``count`` distinct member pixels of a mask as normalized points."""
    ys, xs = np.nonzero(mask.data)
    if ys.size == 0:
        return ()
    picks = rng.choice(ys.size, size=min(count, ys.size), replace=False)
    return tuple(
        _normalize_point(int(xs[i]), int(ys[i]), mask.width, mask.height) for i in picks
    )


def simulate_variants(
    img: RasterImage,
    depth: DepthMap,
    planes=None,
    bokeh_levels=None,
    *,
    out_dir,
    scene_id: str = "scene",
    seed: int = 0,
    eps: float = DEFAULT_FOCUS_EPS,
    source_kind: str = "synthetic",
    renderer=render_fast,
) -> list[DofVariant]:
    """Render the full plane-by-level grid plus the all-in-focus original.

    Produces len(planes) * len(bokeh_levels) + 1 variants, writes every image
    (and the depth map) under ``out_dir/scene_id/``, and samples up to eight
    focus points per variant from its focus set. A plane whose focus set is
    empty keeps its variants with an empty sample list.
    """
    planes = default_planes() if planes is None else [float(p) for p in planes]
    bokeh_levels = (
        default_bokeh_levels() if bokeh_levels is None else [float(b) for b in bokeh_levels]
    )
    if not planes:
        raise ValueError("plane list must not be empty")
    if any(not 0.0 <= p <= 1.0 for p in planes):
        raise ValueError("planes must lie in [0, 1]")
    if any(b <= 0.0 for b in bokeh_levels):
        raise ValueError("bokeh levels must be > 0")

    rng = np.random.default_rng(seed)
    scene_dir = Path(out_dir) / scene_id
    scene_dir.mkdir(parents=True, exist_ok=True)

    depth_rel = f"{scene_id}/depth.png"
    write_depth(depth, Path(out_dir) / depth_rel)

    variants = []
    aif_rel = f"{scene_id}/aif.png"
    write_image(img, Path(out_dir) / aif_rel)
    everywhere = StackMask(np.ones(depth.data.shape))
    variants.append(
        DofVariant(
            scene_id=scene_id,
            focus_depth=None,
            bokeh_level=0.0,
            image_path=aif_rel,
            depth_path=depth_rel,
            focus_point_samples=sample_focus_points(everywhere, rng),
            source_kind=source_kind,
        )
    )

    for plane in planes:
        points = sample_focus_points(focus_set(depth, plane, eps), rng)
        for level in bokeh_levels:
            rendered = renderer(img, depth, RenderParams(focus_depth=plane, bokeh_level=level))
            rel = f"{scene_id}/var_d{plane:.2f}_b{level:g}.png"
            write_image(rendered, Path(out_dir) / rel)
            variants.append(
                DofVariant(
                    scene_id=scene_id,
                    focus_depth=plane,
                    bokeh_level=level,
                    image_path=rel,
                    depth_path=depth_rel,
                    focus_point_samples=points,
                    source_kind=source_kind,
                )
            )
    return variants


def filter_all_in_focus(images, tau: float):
    """Split (key, image) pairs into sharp-enough and rejected by Laplacian variance.

    The variance is computed on 0-255-scaled luminance so thresholds match the
    conventional sharpness scale.
    """
    if tau < 0.0:
        raise ValueError("tau must be >= 0")
    kept, rejected = [], []
    for item in images:
        img = item[1] if isinstance(item, tuple) else item
        score = laplacian_variance(img) * 255.0**2
        (kept if score >= tau else rejected).append(item)
    return kept, rejected


# ---------------------------------------------------------------------------
# Manifest persistence (JSON Lines, paths relative to the manifest)
# ---------------------------------------------------------------------------


def write_manifest(variants, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for v in variants:
            record = {
                "schema_version": MANIFEST_SCHEMA_VERSION,
                "scene_id": v.scene_id,
                "image_path": v.image_path,
                "depth_path": v.depth_path,
                "focus_depth": AIF_SENTINEL if v.focus_depth is None else v.focus_depth,
                "bokeh_level": v.bokeh_level,
                "focus_points": [[x, y] for x, y in v.focus_point_samples],
                "source_kind": v.source_kind,
            }
            fh.write(json.dumps(record) + "\n")


def read_manifest(path) -> list[DofVariant]:
    variants = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            version = record.get("schema_version")
            if version != MANIFEST_SCHEMA_VERSION:
                raise ValueError(f"{path}:{line_no}: unsupported schema version {version}")
            fd = record["focus_depth"]
            variants.append(
                DofVariant(
                    scene_id=record["scene_id"],
                    focus_depth=None if fd == AIF_SENTINEL else float(fd),
                    bokeh_level=float(record["bokeh_level"]),
                    image_path=record["image_path"],
                    depth_path=record["depth_path"],
                    focus_point_samples=tuple((p[0], p[1]) for p in record["focus_points"]),
                    source_kind=record["source_kind"],
                )
            )
    return variants


def group_by_scene(variants) -> dict:
    scenes: dict[str, list[DofVariant]] = {}
    for v in variants:
        scenes.setdefault(v.scene_id, []).append(v)
    return scenes


def sample_pair(variants, rng: np.random.Generator):
    """Pick a (reference, target, condition) triple from one scene's variants.

    The ordered pair is uniform over distinct variants; the condition carries
    one of the target's focus-point samples plus its bokeh level. Only
    variants that have focus points qualify as targets.
    """
    variants = list(variants)
    if len(variants) < 2:
        raise ValueError("scene needs at least 2 variants to form a pair")
    targets = [v for v in variants if v.focus_point_samples]
    if not targets:
        raise ValueError("scene has no variant with focus-point samples")
    target = targets[int(rng.integers(len(targets)))]
    others = [v for v in variants if v is not target]
    reference = others[int(rng.integers(len(others)))]
    f_x, f_y = target.focus_point_samples[int(rng.integers(len(target.focus_point_samples)))]
    return reference, target, CameraCondition(f_x=f_x, f_y=f_y, b=target.bokeh_level)


def synth_probability(step: int, total_steps: int, sched: SamplerSchedule) -> float:
    """Sampling probability of synthetic images at a training step (linear ramp)."""
    if not 0 <= step <= total_steps:
        raise ValueError("step must lie in [0, total_steps]")
    begin = sched.ramp_begin_frac * total_steps
    end = sched.ramp_end_frac * total_steps
    if step <= begin:
        return sched.p_synth_start
    if step >= end:
        return sched.p_synth_end
    frac = (step - begin) / (end - begin)
    return sched.p_synth_start + frac * (sched.p_synth_end - sched.p_synth_start)


PERTURB_KINDS = ("dropout", "random_mask", "random_crop", "gaussian_noise")


def perturb_depth(
    depth: DepthMap,
    kind: str,
    rng: np.random.Generator,
    *,
    mask_p: float = 0.3,
    crop_frac_range: tuple = (0.1, 0.5),
    noise_sigma: float = 1.0,
) -> DepthMap:
    """Degrade a depth map: full dropout, Bernoulli masking, one zeroed
    rectangle, or clamped additive Gaussian noise.
    """
    data = depth.data
    if kind == "dropout":
        return DepthMap(np.zeros_like(data))
    if kind == "random_mask":
        keep = rng.random(data.shape) >= mask_p
        return DepthMap(data * keep)
    if kind == "random_crop":
        h, w = data.shape
        lo, hi = crop_frac_range
        ch = max(1, int(round(rng.uniform(lo, hi) * h)))
        cw = max(1, int(round(rng.uniform(lo, hi) * w)))
        y0 = int(rng.integers(0, max(1, h - ch + 1)))
        x0 = int(rng.integers(0, max(1, w - cw + 1)))
        out = data.copy()
        out[y0:y0 + ch, x0:x0 + cw] = 0.0
        return DepthMap(out)
    if kind == "gaussian_noise":
        noisy = data + noise_sigma * rng.standard_normal(data.shape)
        return DepthMap(np.clip(noisy, 0.0, 1.0))
    raise ValueError(f"unknown perturbation kind {kind!r}")
