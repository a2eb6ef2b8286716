"""Image-comparison metrics: MAE, PSNR, Pearson correlation, and the
Laplacian-variance trend correlation used to score bokeh-level fidelity.
"""

from __future__ import annotations

import math

import numpy as np

from .raster import RasterImage, laplacian_variance

PSNR_CAP_DB = 100.0


class UndefinedCorrelationError(ValueError):
    """Raised when a correlation is requested over a constant sequence."""


def _check_same_shape(a: RasterImage, b: RasterImage) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"image shapes differ: {a.data.shape} vs {b.data.shape}")


def mae(a: RasterImage, b: RasterImage) -> float:
    """Mean absolute difference over all pixels and channels, in [0, 1]."""
    _check_same_shape(a, b)
    return float(np.mean(np.abs(a.data - b.data)))


def psnr(a: RasterImage, b: RasterImage, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 for identical images."""
    _check_same_shape(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(peak * peak / mse))


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient of two equal-length sequences."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("pearson needs two equal-length sequences of >= 2 values")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt(np.sum(dx * dx)))
    sy = float(np.sqrt(np.sum(dy * dy)))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("pearson is undefined for a constant sequence")
    return float(np.clip(np.sum(dx * dy) / (sx * sy), -1.0, 1.0))


def lvcorr(generated, reference_variances=None) -> float:
    """Correlation between a bokeh-level sweep and its sharpness trend.

    ``generated`` is a sequence of (bokeh_level, image). By default the
    negated Laplacian variances are correlated against the levels themselves,
    so a faithful blur ramp (sharpness falling as the level rises) scores
    near +1. Passing ``reference_variances`` instead correlates the measured
    variances against that sequence directly.
    """
    pairs = list(generated)
    levels = [float(b) for b, _ in pairs]
    if len(set(levels)) < 3:
        raise ValueError("lvcorr needs at least 3 distinct bokeh levels")
    variances = [laplacian_variance(img) for _, img in pairs]
    if reference_variances is not None:
        return pearson(variances, list(reference_variances))
    return pearson([-v for v in variances], levels)
