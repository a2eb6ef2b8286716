import numpy as np
import pytest

from refocus import DepthMap, RasterImage, SceneSpec, generate_scene


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def checker_scene():
    spec = SceneSpec(seed=3, layer_count=1, texture_kind="checker",
                     layer_depths=(0.5,), width=48, height=48)
    return generate_scene(spec)


@pytest.fixture
def three_layer_scene():
    spec = SceneSpec(seed=11, layer_count=3, texture_kind="mixed",
                     layer_depths=(0.2, 0.5, 0.8), width=48, height=48)
    return generate_scene(spec)


def random_image(rng, h=16, w=16, channels=3) -> RasterImage:
    return RasterImage(rng.uniform(0.0, 1.0, size=(h, w, channels)))


def random_depth(rng, h=16, w=16) -> DepthMap:
    return DepthMap(rng.uniform(0.0, 1.0, size=(h, w)))
