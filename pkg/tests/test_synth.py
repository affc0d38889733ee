import collections

import numpy as np
import pytest

from griddet.boxes import iou
from griddet.synth import (PlacementFailureError, Scene, SynthConfig,
                           generate_dataset, generate_scene, load_manifest,
                           save_manifest)


def test_same_config_and_seed_bit_identical():
    cfg = SynthConfig(seed=9)
    a = generate_dataset(cfg, 5)
    b = generate_dataset(cfg, 5)
    for sa, sb in zip(a, b):
        assert np.array_equal(sa.image, sb.image)
        assert sa.gts == sb.gts
        assert sa.seed == sb.seed


def test_different_seeds_differ():
    a = generate_scene(SynthConfig(seed=1), 0)
    b = generate_scene(SynthConfig(seed=2), 0)
    assert not np.array_equal(a.image, b.image)


def test_scene_id_changes_content():
    cfg = SynthConfig(seed=1)
    a = generate_scene(cfg, 0)
    b = generate_scene(cfg, 1)
    assert not np.array_equal(a.image, b.image)


def test_single_object_config_yields_exact_count():
    cfg = SynthConfig(seed=4, objects_per_scene=(1, 1))
    scenes = generate_dataset(cfg, 100)
    assert sum(len(s.gts) for s in scenes) == 100


def test_noiseless_max_intensity_inside_gt_box():
    cfg = SynthConfig(seed=6, objects_per_scene=(1, 1), noise_sigma=0.0)
    for scene in generate_dataset(cfg, 10):
        y, x = np.unravel_index(np.argmax(scene.image), scene.image.shape)
        x1, y1, x2, y2 = scene.gts[0].box.corners()
        assert x1 - 1 <= x + 0.5 <= x2 + 1
        assert y1 - 1 <= y + 0.5 <= y2 + 1


def test_gt_invariants_hold():
    cfg = SynthConfig(seed=13)
    w, h = cfg.image_size
    for scene in generate_dataset(cfg, 50):
        assert scene.image.shape == (h, w)
        assert scene.image.min() >= 0.0 and scene.image.max() <= 1.0
        assert len(scene.gts) >= cfg.objects_per_scene[0]
        for i, g in enumerate(scene.gts):
            x1, y1, x2, y2 = g.box.corners()
            assert 0 <= x1 and x2 <= w and 0 <= y1 and y2 <= h
            assert 1 <= g.class_label <= cfg.num_classes
            for other in scene.gts[i + 1:]:
                assert iou(g.box, other.box) <= cfg.max_gt_overlap


def test_class_balance_near_uniform():
    cfg = SynthConfig(seed=21, objects_per_scene=(2, 3))
    counts = collections.Counter()
    total = 0
    scenes = generate_dataset(cfg, 250)
    for s in scenes:
        for g in s.gts:
            counts[g.class_label] += 1
            total += 1
    assert total >= 500
    uniform = total / cfg.num_classes
    for c in range(1, cfg.num_classes + 1):
        assert abs(counts[c] - uniform) <= 0.2 * uniform


def test_similar_classes_share_shape_but_differ_in_fill():
    # Classes in one similarity group render the same footprint at different
    # intensities: same box and shape must produce masks that differ only in
    # the filled value.
    cfg = SynthConfig(seed=0, noise_sigma=0.0)
    from griddet.synth import _class_style
    s1, f1 = _class_style(cfg, 1)
    s2, f2 = _class_style(cfg, 2)
    s3, f3 = _class_style(cfg, 3)
    assert s1 == s2 and f1 != f2
    assert s1 != s3


def test_invalid_similarity_groups_rejected():
    with pytest.raises(ValueError):
        SynthConfig(num_classes=4, class_similarity_groups=((1, 2), (3,)))
    with pytest.raises(ValueError):
        SynthConfig(num_classes=2, class_similarity_groups=((1, 1), (2,)))


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(objects_per_scene=(3, 1))
    with pytest.raises(ValueError):
        SynthConfig(size_range=(0.0, 0.5))
    with pytest.raises(ValueError):
        generate_dataset(SynthConfig(), 0)


def test_placement_failure_when_objects_cannot_fit():
    cfg = SynthConfig(seed=0, objects_per_scene=(3, 3),
                      size_range=(0.9, 0.95), max_gt_overlap=0.0,
                      max_place_tries=20)
    with pytest.raises(PlacementFailureError):
        generate_scene(cfg, 0)


def test_manifest_round_trip_procedural(tmp_path):
    cfg = SynthConfig(seed=17)
    scenes = generate_dataset(cfg, 4)
    path = tmp_path / "manifest.json"
    save_manifest(path, cfg, scenes)
    loaded_cfg, loaded = load_manifest(path)
    assert loaded_cfg == cfg
    for a, b in zip(scenes, loaded):
        assert np.array_equal(a.image, b.image)
        assert a.gts == b.gts
        assert a.scene_id == b.scene_id


def test_manifest_round_trip_with_image_dump(tmp_path):
    cfg = SynthConfig(seed=17)
    scenes = generate_dataset(cfg, 3)
    path = tmp_path / "manifest.json"
    save_manifest(path, cfg, scenes, images_file="images.f64")
    _, loaded = load_manifest(path)
    for a, b in zip(scenes, loaded):
        assert np.array_equal(a.image, b.image)


def test_manifest_rejects_unknown_version(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text('{"format_version": 99, "config": {}, "scenes": []}\n')
    with pytest.raises(ValueError):
        load_manifest(path)
