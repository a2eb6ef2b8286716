"""Focus-stacking algebra: sharpness masks, RGB blending, and latent-space
blending through a pluggable codec standing in for a learned autoencoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import RasterImage, laplacian_map


@dataclass(frozen=True)
class StackMask:
    """Binary (H, W) selector; 1 picks image 1, 0 picks image 2."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"expected non-empty (H, W) mask, got shape {arr.shape}")
        if not np.all((arr == 0.0) | (arr == 1.0)):
            raise ValueError("stack mask values must be exactly 0 or 1")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LatentMask:
    """Continuous (H, W) mask in [0, 1] aligned with a latent grid."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"expected non-empty (H, W) mask, got shape {arr.shape}")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("latent mask values must lie in [0, 1]")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LatentCodec:
    """Pluggable encode/decode pair for (H, W, C) arrays.

    ``identity`` passes data through unchanged; ``avgpool`` mean-pools
    non-overlapping k x k blocks and decodes by nearest upsampling. Both map
    constants to themselves.
    """

    kind: str = "identity"
    pool_factor: int = 1

    def __post_init__(self):
        if self.kind not in ("identity", "avgpool"):
            raise ValueError(f"unknown codec kind {self.kind!r}")
        if self.kind == "identity" and self.pool_factor != 1:
            raise ValueError("identity codec requires pool_factor == 1")
        if self.pool_factor < 1:
            raise ValueError("pool_factor must be >= 1")

    def latent_shape(self, height: int, width: int) -> tuple[int, int]:
        k = self.pool_factor
        if height % k or width % k:
            raise ValueError(f"dimensions {width}x{height} not divisible by pool factor {k}")
        return height // k, width // k

    def encode(self, data: np.ndarray) -> np.ndarray:
        data = np.asarray(data, dtype=np.float64)
        if self.kind == "identity":
            return data.copy()
        h, w = data.shape[:2]
        lh, lw = self.latent_shape(h, w)
        k = self.pool_factor
        return data.reshape(lh, k, lw, k, -1).mean(axis=(1, 3)).reshape(lh, lw, *data.shape[2:])

    def decode(self, latent: np.ndarray) -> np.ndarray:
        latent = np.asarray(latent, dtype=np.float64)
        if self.kind == "identity":
            return latent.copy()
        k = self.pool_factor
        return np.repeat(np.repeat(latent, k, axis=0), k, axis=1)


def stack_mask(img1: RasterImage, img2: RasterImage, smooth_sigma: float = 2.0) -> StackMask:
    """Mark the pixels where image 1 is at least as sharp as image 2.

    Sharpness is the absolute Laplacian, Gaussian-smoothed by ``smooth_sigma``
    to suppress speckle at texture boundaries; ties go to image 1.
    """
    if img1.data.shape[:2] != img2.data.shape[:2]:
        raise ValueError("stack inputs must share dimensions")
    sharp1 = np.abs(laplacian_map(img1))
    sharp2 = np.abs(laplacian_map(img2))
    if smooth_sigma > 0.0:
        sharp1 = ndimage.gaussian_filter(sharp1, smooth_sigma, mode="nearest")
        sharp2 = ndimage.gaussian_filter(sharp2, smooth_sigma, mode="nearest")
    return StackMask((sharp1 >= sharp2).astype(np.float64))


def stack_blend(img1: RasterImage, img2: RasterImage, mask: StackMask) -> RasterImage:
    """Per-pixel blend: mask * img1 + (1 - mask) * img2."""
    if img1.data.shape != img2.data.shape:
        raise ValueError("stack inputs must share shape")
    if (mask.height, mask.width) != img1.data.shape[:2]:
        raise ValueError("mask dimensions must match the images")
    m = mask.data[:, :, None]
    return RasterImage(m * img1.data + (1.0 - m) * img2.data)


def resize_bilinear(arr: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel-centered sampling and edge clamping.

    Equal input and output dimensions reproduce the input exactly.
    """
    if target_h < 1 or target_w < 1:
        raise ValueError("target dimensions must be >= 1")
    arr = np.asarray(arr, dtype=np.float64)
    in_h, in_w = arr.shape[:2]

    ys = (np.arange(target_h) + 0.5) * (in_h / target_h) - 0.5
    xs = (np.arange(target_w) + 0.5) * (in_w / target_w) - 0.5
    y_lo = np.floor(ys)
    x_lo = np.floor(xs)
    ty = ys - y_lo
    tx = xs - x_lo
    y0 = np.clip(y_lo, 0, in_h - 1).astype(np.intp)
    y1 = np.clip(y_lo + 1, 0, in_h - 1).astype(np.intp)
    x0 = np.clip(x_lo, 0, in_w - 1).astype(np.intp)
    x1 = np.clip(x_lo + 1, 0, in_w - 1).astype(np.intp)

    if arr.ndim > 2:
        ty = ty.reshape(-1, *([1] * (arr.ndim - 1)))
        tx = tx.reshape(1, -1, *([1] * (arr.ndim - 2)))
    else:
        ty = ty[:, None]
        tx = tx[None, :]

    rows0 = (1.0 - tx) * arr[:, x0] + tx * arr[:, x1]
    return (1.0 - ty) * rows0[y0] + ty * rows0[y1]


def downsample_mask(mask: StackMask, target_w: int, target_h: int) -> LatentMask:
    """Bilinearly resample a binary stack mask onto a latent grid."""
    resized = resize_bilinear(mask.data, target_h, target_w)
    return LatentMask(np.clip(resized, 0.0, 1.0))


def latent_stack_blend(z1: np.ndarray, z2: np.ndarray, m: LatentMask) -> np.ndarray:
    """Convex blend of two latent tensors per cell and channel."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape:
        raise ValueError("latent tensors must share shape")
    if z1.shape[:2] != (m.height, m.width):
        raise ValueError("latent mask dimensions must match the latents")
    weight = m.data.reshape(m.height, m.width, *([1] * (z1.ndim - 2)))
    return weight * z1 + (1.0 - weight) * z2
