"""Experiment harness behind the CLI: generation, training, detection,
evaluation, and the stepwise-vs-single-step ablation."""

from __future__ import annotations

import dataclasses
import json
import os

import numpy as np

from .config import ExperimentConfig
from .detect import detect_multi, model_fns
from .evaluate import (DetRecord, evaluate_detections, format_report,
                       fp_breakdown, read_detection_dump, write_detection_dump)
from .features import ExtractorConfig, FeatureExtractor
from .model import (MODES, load_checkpoint, precompute_scene_tensors,
                    save_checkpoint, train_models)
from .synth import generate_dataset, load_manifest, save_manifest

TRAIN_MANIFEST = "train_manifest.json"
TEST_MANIFEST = "test_manifest.json"


def cmd_generate(config: ExperimentConfig, n_train: int, n_test: int,
                 out_dir: str) -> tuple[str, str]:
    """Write train/test dataset manifests. Idempotent for a fixed seed."""
    if n_train < 1 or n_test < 1:
        raise ValueError("n_train and n_test must be >= 1")
    os.makedirs(out_dir, exist_ok=True)
    train_scenes = generate_dataset(config.synth, n_train, start_id=0)
    test_scenes = generate_dataset(config.synth, n_test, start_id=n_train)
    train_path = os.path.join(out_dir, TRAIN_MANIFEST)
    test_path = os.path.join(out_dir, TEST_MANIFEST)
    save_manifest(train_path, config.synth, train_scenes)
    save_manifest(test_path, config.synth, test_scenes)
    return train_path, test_path


def cmd_train(config: ExperimentConfig, manifest_path: str,
              checkpoint_path: str, log_path: str | None = None,
              mode: str | None = None):
    """Train the selected strategy on a dataset manifest; write a checkpoint
    and a per-iteration loss log."""
    mode = mode or config.mode
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    _, scenes = load_manifest(manifest_path)
    ext_cfg = ExtractorConfig()
    tensors, input_dim = precompute_scene_tensors(
        scenes, config.grid_train, config.train, ext_cfg)
    num_classes = config.synth.num_classes
    regressor, classifier, log = train_models(
        tensors, config.train, mode, num_classes, input_dim)
    save_checkpoint(checkpoint_path, regressor, classifier,
                    config=config.train, mode=mode, num_classes=num_classes,
                    extractor_config=ext_cfg, stage=config.train.s_train)
    if log_path:
        with open(log_path, "w") as f:
            json.dump({"stage_boundaries": log.stage_boundaries,
                       "entries": log.entries}, f, sort_keys=True)
            f.write("\n")
    return regressor, classifier, log


def cmd_detect(config: ExperimentConfig, checkpoint_path: str,
               manifest_path: str, out_dir: str,
               s_test: int | None = None) -> tuple[str, str]:
    """Run detection over every scene of a manifest; write the detection dump
    and the per-step trajectory export for surviving detections."""
    s_test = config.s_test if s_test is None else s_test
    regressor, classifier, meta = load_checkpoint(checkpoint_path)
    _, scenes = load_manifest(manifest_path)
    reg_fn, cls_fn = model_fns(regressor, classifier)
    extractor = FeatureExtractor(meta["extractor"])
    os.makedirs(out_dir, exist_ok=True)
    det_path = os.path.join(out_dir, "detections.jsonl")
    traj_path = os.path.join(out_dir, "trajectories.jsonl")
    records: list[DetRecord] = []
    traj_lines: list[str] = []
    for scene in scenes:
        results = detect_multi(
            scene.image, config.grid_test, reg_fn, cls_fn,
            eval_steps=[s_test], score_threshold=config.score_threshold,
            nms_iou=config.nms_iou, extractor=extractor)[s_test]
        for r in results:
            records.append(DetRecord(scene.scene_id, r.class_label, r.score,
                                     r.final_box))
            for step, b in enumerate(r.trajectory):
                traj_lines.append(json.dumps({
                    "image_id": scene.scene_id,
                    "grid_index": r.grid_index,
                    "step": step,
                    "box": [b.cx, b.cy, b.w, b.h],
                    "class": r.class_label,
                    "score": r.score,
                }))
    write_detection_dump(det_path, records)
    with open(traj_path, "w") as f:
        for line in traj_lines:
            f.write(line + "\n")
    return det_path, traj_path


def cmd_eval(config: ExperimentConfig, detections_path: str,
             manifest_path: str, report_path: str | None = None):
    """Score a detection dump against a dataset manifest."""
    detections = read_detection_dump(detections_path)
    _, scenes = load_manifest(manifest_path)
    gts = {s.scene_id: s.gts for s in scenes}
    per_class_ap, map_value = evaluate_detections(
        detections, gts, config.synth.num_classes, config.iou_match)
    breakdown = fp_breakdown(detections, gts,
                             config.synth.class_similarity_groups,
                             config.iou_match)
    report = format_report(per_class_ap, map_value, breakdown)
    if report_path:
        with open(report_path, "w") as f:
            f.write(report)
    return per_class_ap, map_value, breakdown, report


def run_ablation(config: ExperimentConfig, seeds: list[int],
                 methods: tuple[str, ...] = MODES,
                 eval_steps: list[int] | None = None,
                 n_train: int | None = None, n_test: int | None = None,
                 progress=None) -> list[dict]:
    """Train every method on identical data with equal compute; evaluate each
    at several iteration counts. Returns one row per (method, s_test, seed).
    """
    eval_steps = eval_steps or list(range(1, config.s_test + 1))
    n_train = n_train or config.n_train
    n_test = n_test or config.n_test
    rows = []
    for seed in seeds:
        synth_cfg = dataclasses.replace(config.synth, seed=seed)
        train_cfg = dataclasses.replace(config.train, seed=seed)
        train_scenes = generate_dataset(synth_cfg, n_train, start_id=0)
        test_scenes = generate_dataset(synth_cfg, n_test, start_id=n_train)
        ext_cfg = ExtractorConfig()
        tensors, input_dim = precompute_scene_tensors(
            train_scenes, config.grid_train, train_cfg, ext_cfg)
        num_classes = synth_cfg.num_classes
        gts = {s.scene_id: s.gts for s in test_scenes}
        for method in methods:
            regressor, classifier, log = train_models(
                tensors, train_cfg, method, num_classes, input_dim)
            reg_fn, cls_fn = model_fns(regressor, classifier)
            per_step: dict[int, list[DetRecord]] = {k: [] for k in eval_steps}
            extractor = FeatureExtractor(ext_cfg)
            for scene in test_scenes:
                results = detect_multi(
                    scene.image, config.grid_test, reg_fn, cls_fn,
                    eval_steps=eval_steps,
                    score_threshold=config.score_threshold,
                    nms_iou=config.nms_iou, extractor=extractor)
                for k in eval_steps:
                    per_step[k].extend(
                        DetRecord(scene.scene_id, r.class_label, r.score,
                                  r.final_box) for r in results[k])
            for k in eval_steps:
                _, map_value = evaluate_detections(
                    per_step[k], gts, num_classes, config.iou_match)
                rows.append({
                    "method": method,
                    "s_test": k,
                    "seed": seed,
                    "map": map_value,
                    "total_iterations": log.total_iterations,
                })
            if progress:
                progress(f"seed {seed} method {method}: "
                         f"mAP@{max(eval_steps)} = "
                         f"{rows[-1]['map']:.4f}")
    return rows


def ablation_means(rows: list[dict]) -> dict[tuple[str, int], float]:
    acc: dict[tuple[str, int], list[float]] = {}
    for r in rows:
        acc.setdefault((r["method"], r["s_test"]), []).append(r["map"])
    return {k: float(np.mean(v)) for k, v in acc.items()}


def format_ablation_table(rows: list[dict]) -> str:
    means = ablation_means(rows)
    steps = sorted({r["s_test"] for r in rows})
    methods = sorted({r["method"] for r in rows})
    lines = ["mean mAP by method and iteration count", ""]
    header = "method   " + "".join(f"  s={k:<6}" for k in steps)
    lines.append(header)
    for m in methods:
        cells = "".join(f"  {means[(m, k)]:.4f}  " for k in steps)
        lines.append(f"{m:<9}{cells}")
    return "\n".join(lines) + "\n"


def cmd_ablation(config: ExperimentConfig, seeds: list[int], out_dir: str,
                 n_train: int | None = None, n_test: int | None = None,
                 progress=None) -> list[dict]:
    os.makedirs(out_dir, exist_ok=True)
    rows = run_ablation(config, seeds, n_train=n_train, n_test=n_test,
                        progress=progress)
    means = ablation_means(rows)
    with open(os.path.join(out_dir, "ablation.json"), "w") as f:
        json.dump({
            "rows": rows,
            "means": [{"method": m, "s_test": k, "mean_map": v}
                      for (m, k), v in sorted(means.items())],
        }, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(out_dir, "ablation_table.txt"), "w") as f:
        f.write(format_ablation_table(rows))
    return rows
