"""Command-line entry point: gen-data, train, eval, compare, selfcheck."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import selfcheck
from .config import ConfigError, RunConfig, echo_config, load_config
from .data import generate_synthetic, export_dataset, load_clip_dataset
from .evalbench import MECHANISM_ORDER, compare_report, run_comparison
from .exceptions import CheckpointError
from .model import load_model_checkpoint
from .train import (
    SkdSrlMechanism,
    load_checkpoint,
    run_training,
    top1_accuracy,
    write_metrics,
)


def _load_cfg(path: str | None) -> RunConfig:
    return load_config(path) if path else RunConfig()


def cmd_gen_data(args) -> int:
    cfg = _load_cfg(args.config)
    split = generate_synthetic(cfg.synthetic)
    export_dataset(split, args.out)
    echo_config(cfg, args.out)
    n = len(split.train) + len(split.val) + len(split.test)
    print(f"wrote {n} videos ({len(split.train)}/{len(split.val)}/{len(split.test)} "
          f"train/val/test) to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args.config)
    split = load_clip_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, out)
    train_cfg = cfg.train_config(
        metrics_path=str(out / "metrics.jsonl"), checkpoint_dir=str(out)
    )
    if train_cfg.max_epochs == 0:
        write_metrics(train_cfg.metrics_path, [])
        print("max_epochs=0: wrote empty metrics file")
        return 0
    model, metrics = run_training(
        split,
        train_cfg,
        SkdSrlMechanism(),
        cfg.model,
        cfg.augment,
        resume_from=args.resume,
        log=print,
    )
    final = metrics[-1]
    print(f"done: {len(metrics)} epochs, final val_top1={final.val_top1:.3f}")
    return 0


def cmd_eval(args) -> int:
    split = load_clip_dataset(args.data)
    videos = getattr(split, args.split)
    try:
        model, _ = load_model_checkpoint(args.checkpoint)
    except CheckpointError:
        model, *_ = load_checkpoint(args.checkpoint)
    cfg = _load_cfg(args.config)
    acc = top1_accuracy(model, videos, cfg.augment)
    print(f"top1_accuracy[{args.split}] = {acc:.4f}")
    return 0


def cmd_compare(args) -> int:
    cfg = _load_cfg(args.config)
    split = load_clip_dataset(args.data)
    mechanisms = [m.strip() for m in args.mechanisms.split(",") if m.strip()]
    for m in mechanisms:
        if m not in MECHANISM_ORDER:
            raise ConfigError(f"mechanisms: unknown mechanism {m!r}")
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, out)
    result = run_comparison(
        mechanisms, seeds, cfg.model, split, cfg.train_config(), cfg.augment, log=print
    )
    paths = compare_report(result, out)
    print((paths["txt"]).read_text())
    return 0


def cmd_selfcheck(args) -> int:
    results = selfcheck.run_all(seed=args.seed)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name}" + (f"  ({r.detail})" if r.detail else ""))
        failed += 0 if r.passed else 1
    if failed:
        print(f"{failed} of {len(results)} checks failed")
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skdsrl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic video dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train with the SKD-SRL objective")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None, help="resume from a training checkpoint")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint's top-1 accuracy")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("compare", help="run the mechanism-comparison harness")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--mechanisms", default=",".join(MECHANISM_ORDER))
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("selfcheck", help="run the oracle/gradient property suites")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
