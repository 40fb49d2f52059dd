"""Command line entry points.

Verbs: ``synth`` writes a synthetic cube/rgb/mask dataset, ``pretrain-seg``
fits the frozen segmentation network, ``train`` runs the optimization loop
from a YAML config, ``infer`` colorizes one cube file, ``eval`` reports
metrics over a directory of pairs, and ``selftest`` runs the property
suites.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import selfcheck
from .losses import pretrain_segmentation
from .train import TrainConfig, Trainer, evaluate, infer, train


def _parse_size(text: str) -> tuple[int, int]:
    if "x" in text:
        h, w = text.lower().split("x")
        return int(h), int(w)
    n = int(text)
    return n, n


def _cmd_synth(args) -> int:
    h, w = _parse_size(args.size)
    samples = data_mod.synth_dataset(args.seed, args.count, h, w,
                                     args.bands, args.classes)
    data_mod.save_dataset(samples, args.out)
    print(f"wrote {len(samples)} pairs to {args.out}")
    return 0


def _cmd_pretrain_seg(args) -> int:
    cfg = TrainConfig.from_yaml(args.config)
    trainer = Trainer(cfg)
    samples, _ = trainer.build_data()
    net = pretrain_segmentation(samples, cfg.dataset.classes,
                                epochs=cfg.seg_epochs, lr=cfg.seg_lr,
                                target_acc=cfg.seg_target_acc, seed=cfg.seed,
                                log=print)
    arrays = {f"seg/{k}": v.numpy() for k, v in net.state_dict().items()}
    arrays["config_json"] = np.array(json.dumps(cfg.to_dict(), sort_keys=True))
    from .train import atomic_savez
    atomic_savez(args.out, **arrays)
    print(f"wrote segmentation weights to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = TrainConfig.from_yaml(args.config)
    result = train(cfg, resume=args.resume, log=print)
    print(result.report)
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def _cmd_infer(args) -> int:
    infer(args.checkpoint, args.input, args.output)
    print(f"wrote {args.output}")
    return 0


def _cmd_eval(args) -> int:
    print(evaluate(args.checkpoint, args.data))
    return 0


def _cmd_selftest(_args) -> int:
    return 0 if selfcheck.run_all(print) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsicolor",
        description="Infrared hyperspectral cube colorization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="emit a synthetic dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", default="64x64",
                   help="HxW or a single edge length")
    p.add_argument("--bands", type=int, default=8)
    p.add_argument("--classes", type=int, default=4)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("pretrain-seg",
                       help="fit the frozen segmentation network")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(fn=_cmd_pretrain_seg)

    p = sub.add_parser("train", help="run the optimization loop")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--resume", type=Path, default=None)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("infer", help="colorize one cube file")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--output", required=True, type=Path)
    p.set_defaults(fn=_cmd_infer)

    p = sub.add_parser("eval", help="metric report over a pair directory")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("selftest", help="run the property suites")
    p.set_defaults(fn=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
