import json

import numpy as np
import pytest

from refocus import build_benchmark, evaluate, read_image
from refocus.benchmark import (
    ADD_BOKEH_LEVELS,
    BENCH_MANIFEST,
    BenchmarkScene,
    BenchmarkSample,
    load_benchmark,
    read_prediction_manifest,
)
from refocus.cli import make_scene_specs
from refocus.metrics import PSNR_CAP_DB


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("bench")
    specs = make_scene_specs(3, seed=21, size=32)
    scenes = build_benchmark(specs, out_dir, seed=21)
    return out_dir, scenes


def test_each_scene_has_ten_samples(built):
    _, scenes = built
    for scene in scenes:
        assert len(scene.samples) == 10
        assert len(scene.refocus_samples) == 2
        assert len(scene.add_bokeh_samples) == 4
        assert len(scene.remove_bokeh_samples) == 4


def test_scene_schema_enforced():
    sample = BenchmarkSample(scene_id="s", sample_id="x", task="refocus",
                             input_path="a", target_path="b", f_x=0.5, f_y=0.5, bokeh=1.0)
    with pytest.raises(ValueError):
        BenchmarkScene(scene_id="s", aif_image_path="a", depth_path="d",
                       refocus_samples=(sample,), add_bokeh_samples=(), remove_bokeh_samples=())


def test_remove_bokeh_reuses_add_bokeh_renders(built):
    out_dir, scenes = built
    for scene in scenes:
        add_by_level = {s.bokeh: s for s in scene.add_bokeh_samples}
        for rem in scene.remove_bokeh_samples:
            level = float(rem.sample_id.rsplit("_b", 1)[1])
            add = add_by_level[level]
            assert rem.input_path == add.target_path
            a = read_image(out_dir / rem.input_path)
            b = read_image(out_dir / add.target_path)
            assert np.array_equal(a.data, b.data)
            assert rem.target_path == scene.aif_image_path


def test_add_bokeh_levels_fixed(built):
    _, scenes = built
    for scene in scenes:
        assert tuple(s.bokeh for s in scene.add_bokeh_samples) == ADD_BOKEH_LEVELS


def test_build_deterministic(tmp_path):
    specs = make_scene_specs(2, seed=5, size=24)
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    build_benchmark(specs, dir_a, seed=5)
    build_benchmark(specs, dir_b, seed=5)
    assert (dir_a / BENCH_MANIFEST).read_text() == (dir_b / BENCH_MANIFEST).read_text()
    for rel in ("scene_0005/aif.png", "scene_0005/refocus_0.png"):
        assert (dir_a / rel).read_bytes() == (dir_b / rel).read_bytes()


def test_manifest_roundtrip(built):
    out_dir, scenes = built
    reloaded = load_benchmark(out_dir)
    assert {s.scene_id for s in reloaded} == {s.scene_id for s in scenes}
    by_id = {s.scene_id: s for s in reloaded}
    for scene in scenes:
        assert by_id[scene.scene_id].samples == scene.samples


def test_self_evaluation_is_perfect(built):
    out_dir, scenes = built
    predictions = {s.sample_id: str(out_dir / s.target_path)
                   for scene in scenes for s in scene.samples}
    report = evaluate(predictions, out_dir, scenes=scenes)
    assert not report.missing
    assert report.evaluated == 10 * len(scenes)
    assert report.overall_mae == 0.0
    assert report.overall_psnr == PSNR_CAP_DB
    for task_report in report.tasks.values():
        assert task_report.mae_mean == 0.0
        assert task_report.psnr_mean == PSNR_CAP_DB
    # self-evaluated LVCorr equals the ground-truth renders' own LVCorr
    assert report.lvcorr_mean is not None
    assert len(report.lvcorr_per_scene) == len(scenes)


def test_reference_predictions_have_positive_error(built):
    out_dir, scenes = built
    predictions = {s.sample_id: str(out_dir / s.input_path)
                   for scene in scenes for s in scene.samples}
    report = evaluate(predictions, out_dir, scenes=scenes)
    for scene in scenes:
        for s in scene.samples:
            if s.task == "add_bokeh":
                pred = read_image(out_dir / s.input_path)
                target = read_image(out_dir / s.target_path)
                assert np.any(pred.data != target.data)
    assert report.tasks["add_bokeh"].mae_mean > 0.0
    assert report.tasks["remove_bokeh"].mae_mean > 0.0


def test_missing_prediction_flagged_and_excluded(built):
    out_dir, scenes = built
    predictions = {s.sample_id: str(out_dir / s.target_path)
                   for scene in scenes for s in scene.samples}
    victim = scenes[0].refocus_samples[0].sample_id
    del predictions[victim]
    report = evaluate(predictions, out_dir, scenes=scenes)
    assert report.missing == [victim]
    assert report.evaluated == 10 * len(scenes) - 1
    assert report.overall_mae == 0.0


def test_prediction_manifest_reader(tmp_path, built):
    out_dir, scenes = built
    manifest = tmp_path / "preds.jsonl"
    sample = scenes[0].add_bokeh_samples[0]
    with open(manifest, "w") as fh:
        fh.write(json.dumps({"sample_id": sample.sample_id, "image_path": "img.png"}) + "\n")
    preds = read_prediction_manifest(manifest)
    assert preds == {sample.sample_id: str(tmp_path / "img.png")}


def test_report_serialization(built):
    out_dir, scenes = built
    predictions = {s.sample_id: str(out_dir / s.target_path)
                   for scene in scenes for s in scene.samples}
    report = evaluate(predictions, out_dir, scenes=scenes)
    payload = json.loads(report.to_json())
    assert payload["overall"]["mae"] == 0.0
    table = report.format_table()
    assert "add_bokeh" in table and "overall" in table
