"""Command line interface: generate | train | detect | eval | ablation."""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import pipeline
from .config import ExperimentConfig, load_config, save_config
from .model import MODES


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(
            cfg,
            synth=dataclasses.replace(cfg.synth, seed=args.seed),
            train=dataclasses.replace(cfg.train, seed=args.seed))
    if getattr(args, "mode", None) is not None:
        cfg = dataclasses.replace(cfg, mode=args.mode)
    if getattr(args, "s_test", None) is not None:
        cfg = dataclasses.replace(cfg, s_test=args.s_test)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="griddet",
        description="Iterative grid-based object detection harness")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, mode=False, s_test=False):
        sp.add_argument("--config", help="YAML experiment config")
        sp.add_argument("--seed", type=int, help="override synth/train seed")
        if mode:
            sp.add_argument("--mode", choices=MODES,
                            help="training strategy override")
        if s_test:
            sp.add_argument("--s-test", type=int, dest="s_test",
                            help="iteration count override")

    sp = sub.add_parser("generate", help="write train/test dataset manifests")
    common(sp)
    sp.add_argument("--n-train", type=int, default=None)
    sp.add_argument("--n-test", type=int, default=None)
    sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("train", help="train models on a dataset manifest")
    common(sp, mode=True)
    sp.add_argument("--dataset", required=True, help="train manifest path")
    sp.add_argument("--out", required=True, help="checkpoint output path")
    sp.add_argument("--log", help="training loss log path (JSON)")

    sp = sub.add_parser("detect", help="run detection over a dataset")
    common(sp, s_test=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", required=True, help="test manifest path")
    sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("eval", help="score a detection dump")
    common(sp)
    sp.add_argument("--detections", required=True)
    sp.add_argument("--dataset", required=True, help="manifest path")
    sp.add_argument("--out", help="report output path")

    sp = sub.add_parser("ablation",
                        help="train and compare all strategies across seeds")
    common(sp)
    sp.add_argument("--seeds", default="0,1,2,3,4",
                    help="comma-separated seed list")
    sp.add_argument("--n-train", type=int, default=None)
    sp.add_argument("--n-test", type=int, default=None)
    sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("init-config", help="write a default config file")
    sp.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "init-config":
            save_config(ExperimentConfig(), args.out)
            print(f"wrote {args.out}")
            return 0
        cfg = _load(args)
        if args.command == "generate":
            train_path, test_path = pipeline.cmd_generate(
                cfg, args.n_train or cfg.n_train, args.n_test or cfg.n_test,
                args.out)
            print(f"wrote {train_path} and {test_path}")
        elif args.command == "train":
            _, _, log = pipeline.cmd_train(cfg, args.dataset, args.out,
                                           log_path=args.log, mode=args.mode)
            print(f"wrote {args.out} ({log.total_iterations} iterations)")
        elif args.command == "detect":
            det_path, traj_path = pipeline.cmd_detect(
                cfg, args.checkpoint, args.dataset, args.out,
                s_test=args.s_test)
            print(f"wrote {det_path} and {traj_path}")
        elif args.command == "eval":
            _, map_value, _, report = pipeline.cmd_eval(
                cfg, args.detections, args.dataset, report_path=args.out)
            sys.stdout.write(report)
            print(f"mAP = {map_value:.4f}")
        elif args.command == "ablation":
            seeds = [int(s) for s in args.seeds.split(",") if s != ""]
            pipeline.cmd_ablation(cfg, seeds, args.out,
                                  n_train=args.n_train, n_test=args.n_test,
                                  progress=lambda msg: print(msg, flush=True))
            print(f"wrote {args.out}/ablation.json")
        return 0
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
