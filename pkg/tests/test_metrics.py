import numpy as np
import pytest

from refocus import RasterImage, lvcorr, mae, pearson, psnr
from refocus.metrics import PSNR_CAP_DB, UndefinedCorrelationError
from refocus.render import RenderParams, render_oracle

from conftest import random_image


def test_mae_identical_is_zero(rng):
    img = random_image(rng)
    assert mae(img, img) == 0.0


def test_mae_extremes():
    zeros = RasterImage(np.zeros((4, 4, 3)))
    ones = RasterImage(np.ones((4, 4, 3)))
    assert mae(zeros, ones) == 1.0


def test_mae_half_pixels_differ():
    a = np.zeros((2, 2, 1))
    b = np.zeros((2, 2, 1))
    b[0, :, 0] = 0.5  # half the pixels differ by 0.5
    assert mae(RasterImage(a), RasterImage(b)) == pytest.approx(0.25)


def test_mae_symmetric(rng):
    a, b = random_image(rng), random_image(rng)
    assert mae(a, b) == mae(b, a)


def test_mae_rejects_mismatch(rng):
    with pytest.raises(ValueError):
        mae(random_image(rng, 4, 4), random_image(rng, 4, 5))


def test_psnr_identical_caps():
    img = RasterImage(np.full((4, 4, 3), 0.3))
    assert psnr(img, img) == PSNR_CAP_DB


def test_psnr_extremes_zero_db():
    zeros = RasterImage(np.zeros((4, 4, 3)))
    ones = RasterImage(np.ones((4, 4, 3)))
    assert psnr(zeros, ones) == pytest.approx(0.0)


def test_psnr_from_known_mse():
    a = np.zeros((10, 10, 1))
    b = np.full((10, 10, 1), 0.1)  # MSE = 0.01
    assert psnr(RasterImage(a), RasterImage(b)) == pytest.approx(20.0)


def test_psnr_symmetric(rng):
    a, b = random_image(rng), random_image(rng)
    assert psnr(a, b) == psnr(b, a)


def test_pearson_perfect_linear():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)


def test_pearson_hand_computed_value():
    # cov = 3, ss_x = 2, ss_y = 42/9; r = 3 / sqrt(2 * 42/9) = 0.98198...
    assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(0.9820, abs=1e-4)


def test_pearson_zero_variance_undefined():
    with pytest.raises(UndefinedCorrelationError):
        pearson([1, 1, 1], [1, 2, 3])


def test_pearson_affine_invariance(rng):
    x = rng.standard_normal(30)
    y = rng.standard_normal(30)
    base = pearson(x, y)
    assert abs(pearson(2.5 * x + 1.0, y) - base) < 1e-9
    assert abs(pearson(x, 0.1 * y - 4.0) - base) < 1e-9


def test_lvcorr_oracle_render_sweep():
    # moderate depth separations keep the variance decay close to linear over
    # this sparse level sweep; measured 0.99 on this scene
    from refocus import SceneSpec, generate_scene

    spec = SceneSpec(seed=53, layer_count=4, texture_kind="mixed",
                     layer_depths=(0.2, 0.4, 0.5, 0.6), width=64, height=64)
    img, depth = generate_scene(spec)
    pairs = []
    for b in (1.0, 5.0, 10.0, 20.0):
        out = render_oracle(img, depth, RenderParams(focus_depth=0.6, bokeh_level=b))
        pairs.append((b, out))
    assert lvcorr(pairs) >= 0.85


def test_lvcorr_perfect_affine_trend(rng):
    # synthesize images whose Laplacian variance falls affinely with b by
    # blending a textured image towards its mean
    base = random_image(rng, 16, 16)
    mean = float(base.data.mean())
    pairs = []
    for i, b in enumerate([1.0, 2.0, 3.0, 4.0]):
        # Laplacian variance scales with the square of the contrast factor,
        # so sqrt factors make the variance sequence affine in i
        f = np.sqrt(1.0 - 0.2 * i)
        img = RasterImage(mean + f * (base.data - mean))
        pairs.append((b, img))
    assert lvcorr(pairs) == pytest.approx(1.0, abs=1e-6)


def test_lvcorr_level_independent_images(rng):
    base = random_image(rng, 16, 16)
    jitter_rng = np.random.default_rng(0)
    pairs = []
    for b in (1.0, 3.0, 5.0, 8.0, 12.0, 16.0, 20.0):
        jitter = np.clip(base.data + jitter_rng.uniform(-1e-6, 1e-6, base.data.shape), 0, 1)
        pairs.append((b, RasterImage(jitter)))
    assert abs(lvcorr(pairs)) <= 0.5


def test_lvcorr_constant_sequence_undefined():
    img = RasterImage(np.full((8, 8, 3), 0.5))
    with pytest.raises(UndefinedCorrelationError):
        lvcorr([(1.0, img), (5.0, img), (10.0, img)])


def test_lvcorr_needs_three_distinct_levels(rng):
    img = random_image(rng)
    with pytest.raises(ValueError):
        lvcorr([(1.0, img), (1.0, img), (2.0, img)])


def test_lvcorr_reference_variance_mode(checker_scene):
    img, depth = checker_scene
    pairs = []
    for b in (1.0, 5.0, 10.0, 20.0):
        out = render_oracle(img, depth, RenderParams(focus_depth=1.0, bokeh_level=b))
        pairs.append((b, out))
    from refocus import laplacian_variance

    refs = [laplacian_variance(img_) for _, img_ in pairs]
    assert lvcorr(pairs, reference_variances=refs) == pytest.approx(1.0)
