"""Core raster types, Laplacian sharpness operators, PNG I/O, and a
procedural scene generator that provides images with exact ground-truth depth.

All pixel data is float64 in [0, 1], row-major, origin top-left. Depth maps
use the convention 1 = closest, 0 = farthest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

LAPLACIAN_KERNEL = np.array(
    [[0.0, 1.0, 0.0],
     [1.0, -4.0, 1.0],
     [0.0, 1.0, 0.0]]
)


class DecodeError(ValueError):
    """Raised when an image file cannot be decoded."""


def _validate_unit_array(data: np.ndarray, what: str) -> None:
    if data.size == 0:
        raise ValueError(f"{what} has zero size")
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{what} contains non-finite values")
    if data.min() < 0.0 or data.max() > 1.0:
        raise ValueError(f"{what} values must lie in [0, 1]")


@dataclass(frozen=True)
class RasterImage:
    """An image as an (H, W, C) float64 array with values in [0, 1], C in {1, 3}."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) image data, got shape {arr.shape}")
        _validate_unit_array(arr, "image")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel relative depth in [0, 1] as an (H, W) float64 array; 1 = closest."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected (H, W) depth data, got shape {arr.shape}")
        _validate_unit_array(arr, "depth map")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def luminance(img: RasterImage) -> np.ndarray:
    """Return the (H, W) luminance plane (0.299 R + 0.587 G + 0.114 B)."""
    if img.channels == 1:
        return img.data[:, :, 0]
    r, g, b = LUMA_WEIGHTS
    return r * img.data[:, :, 0] + g * img.data[:, :, 1] + b * img.data[:, :, 2]


def laplacian_map(img: RasterImage) -> np.ndarray:
    """4-neighbor Laplacian of the luminance plane with replicate-edge padding.

    Returns an unclamped (H, W) float64 array; values may lie outside [0, 1],
    so the result is a plain array rather than a RasterImage.
    """
    return ndimage.convolve(luminance(img), LAPLACIAN_KERNEL, mode="nearest")


def laplacian_variance(img: RasterImage) -> float:
    """Population variance of the Laplacian map, the usual sharpness measure."""
    return float(np.var(laplacian_map(img)))


# ---------------------------------------------------------------------------
# Procedural scenes
# ---------------------------------------------------------------------------

TEXTURE_KINDS = ("checker", "noise", "gradient", "mixed")


@dataclass(frozen=True)
class SceneSpec:
    """Deterministic recipe for a layered test scene with known depth.

    ``layer_depths`` must be strictly sorted; the same spec always produces
    bitwise-identical image and depth outputs.
    """

    seed: int
    layer_count: int = 3
    texture_kind: str = "mixed"
    layer_depths: tuple = (0.2, 0.5, 0.8)
    width: int = 64
    height: int = 64

    def __post_init__(self):
        object.__setattr__(self, "layer_depths", tuple(float(d) for d in self.layer_depths))
        if self.texture_kind not in TEXTURE_KINDS:
            raise ValueError(f"unknown texture kind {self.texture_kind!r}")
        if self.layer_count < 1:
            raise ValueError("layer_count must be >= 1")
        if self.layer_count != len(self.layer_depths):
            raise ValueError("layer_count must match len(layer_depths)")
        if any(not 0.0 <= d <= 1.0 for d in self.layer_depths):
            raise ValueError("layer depths must lie in [0, 1]")
        if any(a >= b for a, b in zip(self.layer_depths, self.layer_depths[1:])):
            raise ValueError("layer_depths must be strictly sorted")
        if self.width < 1 or self.height < 1:
            raise ValueError("scene dimensions must be positive")


def _texture(kind: str, h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """One (h, w, 3) texture tile in [0.05, 0.95] with visible detail."""
    if kind == "checker":
        cell = int(rng.integers(2, max(3, min(h, w) // 4 + 1)))
        yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        pattern = ((yy // cell + xx // cell) % 2).astype(np.float64)
        lo, hi = sorted(rng.uniform(0.05, 0.95, size=2))
        base = lo + (hi - lo) * pattern
        tint = rng.uniform(0.8, 1.0, size=3)
        return np.clip(base[:, :, None] * tint[None, None, :], 0.0, 1.0)
    if kind == "noise":
        raw = rng.uniform(0.0, 1.0, size=(h, w, 3))
        smooth = ndimage.gaussian_filter(raw, sigma=(1.0, 1.0, 0.0), mode="nearest")
        lo, hi = smooth.min(), smooth.max()
        if hi - lo < 1e-12:
            return np.full((h, w, 3), 0.5)
        return 0.05 + 0.9 * (smooth - lo) / (hi - lo)
    if kind == "gradient":
        angle = rng.uniform(0.0, 2 * np.pi)
        yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
        ramp = xx * np.cos(angle) + yy * np.sin(angle)
        ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-12)
        color_a = rng.uniform(0.05, 0.95, size=3)
        color_b = rng.uniform(0.05, 0.95, size=3)
        return ramp[:, :, None] * color_a + (1.0 - ramp[:, :, None]) * color_b
    # mixed: pick a concrete kind per layer
    pick = ("checker", "noise", "gradient")[int(rng.integers(0, 3))]
    return _texture(pick, h, w, rng)


def generate_scene(spec: SceneSpec) -> tuple[RasterImage, DepthMap]:
    """Render a layered textured scene and its exact piecewise-constant depth.

    Layer 0 (the first depth) fills the background; each further layer drops a
    random rectangle on top. Placement retries until every layer owns at least
    one pixel, so the depth histogram has exactly ``layer_count`` values.
    """
    rng = np.random.default_rng(spec.seed)
    h, w, n = spec.height, spec.width, spec.layer_count

    for _ in range(200):
        labels = np.zeros((h, w), dtype=np.intp)
        for i in range(1, n):
            rh = max(1, int(round(rng.uniform(0.2, 0.45) * h)))
            rw = max(1, int(round(rng.uniform(0.2, 0.45) * w)))
            y0 = int(rng.integers(0, max(1, h - rh + 1)))
            x0 = int(rng.integers(0, max(1, w - rw + 1)))
            labels[y0:y0 + rh, x0:x0 + rw] = i
        if len(np.unique(labels)) == n:
            break
    else:
        raise ValueError(f"could not place {n} visible layers on a {w}x{h} canvas")

    image = np.zeros((h, w, 3), dtype=np.float64)
    for i in range(n):
        tex = _texture(spec.texture_kind, h, w, rng)
        mask = labels == i
        image[mask] = tex[mask]

    depths = np.asarray(spec.layer_depths, dtype=np.float64)
    depth = depths[labels]
    return RasterImage(image), DepthMap(depth)


# ---------------------------------------------------------------------------
# File I/O: 8-bit RGB PNG for images, 16-bit grayscale PNG for depth
# ---------------------------------------------------------------------------


def write_image(img: RasterImage, path) -> None:
    """Write an image as 8-bit-per-channel PNG (quantization error <= 1/510)."""
    quantized = np.round(img.data * 255.0).astype(np.uint8)
    if img.channels == 1:
        pil = Image.fromarray(quantized[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(quantized, mode="RGB")
    pil.save(path, format="PNG")


def read_image(path) -> RasterImage:
    """Read an 8-bit PNG (or any raster PIL decodes) as a RasterImage."""
    try:
        with Image.open(path) as pil:
            pil.load()
            mode = "L" if pil.mode in ("L", "I;16", "I") else "RGB"
            arr = np.asarray(pil.convert(mode), dtype=np.float64)
    except DecodeError:
        raise
    except Exception as exc:
        raise DecodeError(f"cannot decode image file {path}: {exc}") from exc
    return RasterImage(arr / 255.0)


def write_depth(depth: DepthMap, path) -> None:
    """Write a depth map as 16-bit grayscale PNG with value/65535 mapping."""
    quantized = np.round(depth.data * 65535.0).astype(np.uint16)
    Image.fromarray(quantized).save(path, format="PNG")


def read_depth(path) -> DepthMap:
    """Read a 16-bit grayscale PNG back into a DepthMap.

    8-bit grayscale files are accepted too and rescaled by 255 instead.
    """
    try:
        with Image.open(path) as pil:
            pil.load()
            mode = pil.mode
            arr = np.asarray(pil, dtype=np.float64)
    except Exception as exc:
        raise DecodeError(f"cannot decode depth file {path}: {exc}") from exc
    if arr.ndim != 2:
        raise DecodeError(f"depth file {path} is not single-channel")
    if mode == "L":
        return DepthMap(arr / 255.0)
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        return DepthMap(arr / 65535.0)
    raise DecodeError(f"depth file {path} has unsupported mode {mode!r}")
