import numpy as np
import pytest

from refocus import (
    DepthMap,
    RasterImage,
    filter_all_in_focus,
    focus_set,
    perturb_depth,
    read_manifest,
    sample_pair,
    simulate_variants,
    synth_probability,
    write_manifest,
)
from refocus.render import RenderParams, render_fast
from refocus.simulate import (
    DofVariant,
    SamplerSchedule,
    default_bokeh_levels,
    default_planes,
    sample_focus_points,
)

from conftest import random_depth, random_image


def test_focus_set_selects_exact_layer():
    depth = DepthMap(np.array([[0.2, 0.5], [0.8, 0.5]]))
    mask = focus_set(depth, 0.5, eps=0.05)
    assert np.array_equal(mask.data, np.array([[0.0, 1.0], [0.0, 1.0]]))


def test_focus_set_full_range():
    depth = random_depth(np.random.default_rng(0), 8, 8)
    assert np.all(focus_set(depth, 0.5, eps=1.0).data == 1.0)


def test_focus_set_membership_is_the_inequality(rng):
    depth = random_depth(rng, 12, 12)
    d, eps = 0.35, 0.08
    mask = focus_set(depth, d, eps)
    for y in range(12):
        for x in range(12):
            assert bool(mask.data[y, x]) == (abs(depth.data[y, x] - d) < eps)


def test_focus_set_rejects_bad_args(rng):
    depth = random_depth(rng)
    with pytest.raises(ValueError):
        focus_set(depth, 1.2, 0.05)
    with pytest.raises(ValueError):
        focus_set(depth, 0.5, 0.0)


def test_sampled_focus_points_satisfy_inequality(rng):
    depth = random_depth(rng, 20, 20)
    d, eps = 0.5, 0.1
    mask = focus_set(depth, d, eps)
    points = sample_focus_points(mask, rng)
    assert points
    h, w = depth.data.shape
    for f_x, f_y in points:
        x = int(round(f_x * (w - 1)))
        y = int(round(f_y * (h - 1)))
        assert abs(depth.data[y, x] - d) < eps


def test_default_grid_shapes():
    planes = default_planes()
    levels = default_bokeh_levels()
    assert len(planes) == 21 and planes[0] == 0.0 and planes[-1] == 1.0
    assert planes[1] == pytest.approx(0.05)
    assert levels == [float(b) for b in range(1, 21)]


def test_variant_count_formula(tmp_path, three_layer_scene):
    img, depth = three_layer_scene
    variants = simulate_variants(
        img, depth, planes=[0.2, 0.5], bokeh_levels=[1, 5, 9],
        out_dir=tmp_path, scene_id="s0", seed=1,
    )
    assert len(variants) == 2 * 3 + 1


def test_simulate_zero_level_rejected_but_aif_is_input(tmp_path, three_layer_scene):
    img, depth = three_layer_scene
    with pytest.raises(ValueError):
        simulate_variants(img, depth, planes=[0.5], bokeh_levels=[0.0],
                          out_dir=tmp_path, scene_id="s0")
    variants = simulate_variants(img, depth, planes=[0.5], bokeh_levels=[1.0],
                                 out_dir=tmp_path, scene_id="s1")
    from refocus import read_image

    aif = [v for v in variants if v.focus_depth is None][0]
    stored = read_image(tmp_path / aif.image_path)
    assert np.max(np.abs(stored.data - img.data)) <= 1.0 / 510.0


def test_simulate_empty_plane_keeps_variant_with_no_points(tmp_path, three_layer_scene):
    img, depth = three_layer_scene
    variants = simulate_variants(img, depth, planes=[0.35], bokeh_levels=[2.0],
                                 out_dir=tmp_path, scene_id="s0")
    plane_variants = [v for v in variants if v.focus_depth is not None]
    assert len(plane_variants) == 1
    assert plane_variants[0].focus_point_samples == ()


def test_simulate_requires_planes(tmp_path, three_layer_scene):
    img, depth = three_layer_scene
    with pytest.raises(ValueError):
        simulate_variants(img, depth, planes=[], bokeh_levels=[1.0],
                          out_dir=tmp_path, scene_id="s0")


def test_manifest_roundtrip_identity(tmp_path, three_layer_scene):
    img, depth = three_layer_scene
    variants = simulate_variants(img, depth, planes=[0.2, 0.8], bokeh_levels=[1, 3],
                                 out_dir=tmp_path, scene_id="scene_a", seed=7)
    path = tmp_path / "manifest.jsonl"
    write_manifest(variants, path)
    reloaded = read_manifest(path)
    assert reloaded == variants


def test_manifest_rejects_unknown_schema(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"schema_version": 99}\n')
    with pytest.raises(ValueError):
        read_manifest(path)


def _toy_variants():
    return [
        DofVariant(scene_id="s", focus_depth=None, bokeh_level=0.0,
                   image_path="a.png", depth_path="d.png",
                   focus_point_samples=((0.1, 0.1),)),
        DofVariant(scene_id="s", focus_depth=0.5, bokeh_level=5.0,
                   image_path="b.png", depth_path="d.png",
                   focus_point_samples=((0.5, 0.5),)),
        DofVariant(scene_id="s", focus_depth=0.8, bokeh_level=9.0,
                   image_path="c.png", depth_path="d.png",
                   focus_point_samples=((0.9, 0.9),)),
    ]


def test_sample_pair_two_variant_scene(rng):
    variants = _toy_variants()[:2]
    for _ in range(20):
        ref, target, cond = sample_pair(variants, rng)
        assert {ref.image_path, target.image_path} == {"a.png", "b.png"}
        assert cond.b == target.bokeh_level


def test_sample_pair_condition_from_target_samples(rng):
    variants = _toy_variants()
    for _ in range(50):
        _, target, cond = sample_pair(variants, rng)
        assert (cond.f_x, cond.f_y) in target.focus_point_samples


def test_sample_pair_needs_two_variants(rng):
    with pytest.raises(ValueError):
        sample_pair(_toy_variants()[:1], rng)


def test_sample_pair_ordered_pair_frequencies(rng):
    variants = _toy_variants()
    counts = {}
    draws = 10_000
    for _ in range(draws):
        ref, target, _ = sample_pair(variants, rng)
        counts[(ref.image_path, target.image_path)] = counts.get((ref.image_path, target.image_path), 0) + 1
    assert len(counts) == 6
    p = 1.0 / 6.0
    sigma = (p * (1 - p) / draws) ** 0.5
    for pair, count in counts.items():
        assert abs(count / draws - p) <= 3 * sigma, f"pair {pair} frequency off"


def test_filter_all_in_focus_rejects_constant():
    flat = RasterImage(np.full((16, 16, 3), 0.5))
    kept, rejected = filter_all_in_focus([("flat", flat)], tau=1.0)
    assert not kept and len(rejected) == 1


def test_filter_all_in_focus_separates_blurred(checker_scene):
    from refocus import laplacian_variance

    img, depth = checker_scene
    blurred = render_fast(img, depth, RenderParams(focus_depth=1.0, bokeh_level=20.0))
    lv_sharp = laplacian_variance(img) * 255.0**2
    lv_blur = laplacian_variance(blurred) * 255.0**2
    tau = (lv_sharp + lv_blur) / 2.0
    kept, rejected = filter_all_in_focus([("sharp", img), ("blurred", blurred)], tau=tau)
    assert [k for k, _ in kept] == ["sharp"]
    assert [k for k, _ in rejected] == ["blurred"]


def test_filter_all_in_focus_zero_tau_keeps_all(rng):
    images = [("a", random_image(rng)), ("b", random_image(rng))]
    kept, rejected = filter_all_in_focus(images, tau=0.0)
    assert len(kept) == 2 and not rejected


def test_synth_probability_schedule_points():
    sched = SamplerSchedule()
    total = 3600
    assert synth_probability(360, total, sched) == 0.5
    midpoint = int((1000 + 2500) / 2)
    assert synth_probability(midpoint, total, sched) == pytest.approx(0.75)
    assert synth_probability(3240, total, sched) == 1.0


def test_synth_probability_monotone_and_continuous():
    sched = SamplerSchedule()
    total = 1000
    values = [synth_probability(s, total, sched) for s in range(total + 1)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert max(abs(b - a) for a, b in zip(values, values[1:])) < 0.005


def test_synth_probability_rejects_out_of_range():
    with pytest.raises(ValueError):
        synth_probability(-1, 100, SamplerSchedule())
    with pytest.raises(ValueError):
        synth_probability(101, 100, SamplerSchedule())


def test_perturb_dropout_zeroes_everything(rng):
    depth = random_depth(rng)
    out = perturb_depth(depth, "dropout", rng)
    assert np.all(out.data == 0.0)


def test_perturb_random_mask_fraction(rng):
    depth = DepthMap(np.full((400, 250), 0.75))  # 1e5 pixels
    out = perturb_depth(depth, "random_mask", rng)
    zeroed = float(np.mean(out.data == 0.0))
    sigma = (0.3 * 0.7 / depth.data.size) ** 0.5
    assert abs(zeroed - 0.3) <= 3 * sigma


def test_perturb_random_crop_bounds(rng):
    depth = DepthMap(np.full((60, 80), 0.9))
    out = perturb_depth(depth, "random_crop", rng)
    zero_rows = np.nonzero((out.data == 0.0).any(axis=1))[0]
    zero_cols = np.nonzero((out.data == 0.0).any(axis=0))[0]
    rh, rw = len(zero_rows), len(zero_cols)
    assert 0.1 * 60 - 1 <= rh <= 0.5 * 60 + 1
    assert 0.1 * 80 - 1 <= rw <= 0.5 * 80 + 1
    # the zeroed region is one contiguous rectangle
    assert np.all(np.diff(zero_rows) == 1) and np.all(np.diff(zero_cols) == 1)
    assert float((out.data == 0.0).sum()) == rh * rw


def test_perturb_gaussian_noise_stays_in_range(rng):
    depth = random_depth(rng, 50, 50)
    out = perturb_depth(depth, "gaussian_noise", rng)
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0
    assert not np.array_equal(out.data, depth.data)


def test_perturb_unknown_kind(rng):
    with pytest.raises(ValueError):
        perturb_depth(random_depth(rng), "blur", rng)
