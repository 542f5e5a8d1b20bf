"""Mechanism-comparison harness: train one encoder under each of the five
training mechanisms and report test top-1 side by side.

The published UCF101 numbers are carried along as a labeled reference column
only; desk-scale synthetic runs are directional, not reproductions.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import mean, pstdev

from .augment import AugmentConfig
from .data import DatasetSplit
from .model import ModelSpec
from .train import (
    BaselineAugmentMechanism,
    BaselineMechanism,
    KdMechanism,
    MetricsRecord,
    SelfKdMechanism,
    SkdSrlMechanism,
    TrainConfig,
    run_training,
    top1_accuracy,
)

MECHANISM_ORDER = ["baseline", "baseline_augment", "kd", "self_kd", "skd_srl"]

# Published UCF101 / ResNet-18 top-1 per mechanism; reference only.
REFERENCE_UCF101_TOP1 = {
    "baseline": 46.5,
    "baseline_augment": 55.6,
    "kd": 61.4,
    "self_kd": 66.7,
    "skd_srl": 69.8,
}


@dataclass(frozen=True)
class MechanismSpec:
    kind: str
    teacher_spec: ModelSpec | None = None

    def __post_init__(self):
        if self.kind not in MECHANISM_ORDER:
            raise ValueError(f"unknown mechanism {self.kind!r}")
        if (self.kind == "kd") != (self.teacher_spec is not None):
            raise ValueError("teacher_spec is required exactly for the kd mechanism")


@dataclass
class RunResult:
    mechanism: str
    seed: int
    val_top1: float
    test_top1: float
    seconds: float
    metrics: list[MetricsRecord] = field(default_factory=list)


@dataclass
class ComparisonResult:
    runs: list[RunResult]

    def mechanisms(self) -> list[str]:
        present = {r.mechanism for r in self.runs}
        return [m for m in MECHANISM_ORDER if m in present]

    def rows(self) -> list[dict]:
        out = []
        for mech in self.mechanisms():
            runs = [r for r in self.runs if r.mechanism == mech]
            tests = [r.test_top1 for r in runs]
            out.append(
                {
                    "mechanism": mech,
                    "seeds": [r.seed for r in runs],
                    "val_top1_mean": mean(r.val_top1 for r in runs),
                    "test_top1_mean": mean(tests),
                    "test_top1_std": pstdev(tests) if len(tests) > 1 else 0.0,
                    "seconds": sum(r.seconds for r in runs),
                    "reference_ucf101": REFERENCE_UCF101_TOP1[mech],
                }
            )
        return out


def default_teacher_spec(num_classes: int) -> ModelSpec:
    """A wider toy encoder standing in for the paper's ResNet-50 teacher."""
    return ModelSpec(
        encoder_arch="toy3d", num_classes=num_classes, repr_dim=256, proj_dim=256, pred_hidden=64
    )


def _build_mechanism(mech: MechanismSpec, split: DatasetSplit, cfg: TrainConfig, aug_cfg, log):
    if mech.kind == "baseline":
        return BaselineMechanism()
    if mech.kind == "baseline_augment":
        return BaselineAugmentMechanism()
    if mech.kind == "self_kd":
        return SelfKdMechanism()
    if mech.kind == "skd_srl":
        return SkdSrlMechanism()
    # kd: train the teacher first with CE on augmented views
    if log:
        log(f"[kd] training teacher ({mech.teacher_spec.encoder_arch}, D={mech.teacher_spec.repr_dim})")
    teacher_cfg = replace(cfg, checkpoint_dir=None, metrics_path=None)
    teacher, _ = run_training(
        split, teacher_cfg, BaselineAugmentMechanism(), mech.teacher_spec, aug_cfg, log=log
    )
    return KdMechanism(teacher)


def run_mechanism(
    mech: MechanismSpec,
    model_spec: ModelSpec,
    split: DatasetSplit,
    cfg: TrainConfig,
    seed: int,
    aug_cfg: AugmentConfig | None = None,
    log=None,
) -> RunResult:
    """Train under one mechanism/seed; returns metrics plus final test top-1."""
    aug_cfg = aug_cfg or AugmentConfig()
    cfg = replace(cfg, seed=seed)
    t0 = time.perf_counter()
    strategy = _build_mechanism(mech, split, cfg, aug_cfg, log)
    model, metrics = run_training(split, cfg, strategy, model_spec, aug_cfg, log=log)
    val = top1_accuracy(model, split.val, aug_cfg, cfg.batch_size)
    test = top1_accuracy(model, split.test, aug_cfg, cfg.batch_size)
    return RunResult(
        mechanism=mech.kind,
        seed=seed,
        val_top1=val,
        test_top1=test,
        seconds=time.perf_counter() - t0,
        metrics=metrics,
    )


def run_comparison(
    mechanisms: list[str],
    seeds: list[int],
    model_spec: ModelSpec,
    split: DatasetSplit,
    cfg: TrainConfig,
    aug_cfg: AugmentConfig | None = None,
    log=None,
) -> ComparisonResult:
    runs = []
    for kind in [m for m in MECHANISM_ORDER if m in mechanisms]:
        teacher = default_teacher_spec(model_spec.num_classes) if kind == "kd" else None
        mech = MechanismSpec(kind=kind, teacher_spec=teacher)
        for seed in seeds:
            if log:
                log(f"== mechanism {kind}, seed {seed} ==")
            runs.append(run_mechanism(mech, model_spec, split, cfg, seed, aug_cfg, log=log))
    return ComparisonResult(runs=runs)


def compare_report(result: ComparisonResult, out_dir) -> dict[str, Path]:
    """Write per-run CSV, plain-text summary table, and JSON summary."""
    if not result.runs:
        raise ValueError("empty comparison result")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "runs.csv"
    mech_rank = {m: i for i, m in enumerate(MECHANISM_ORDER)}
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mechanism", "seed", "val_top1", "test_top1", "seconds"])
        for r in sorted(result.runs, key=lambda r: (mech_rank[r.mechanism], r.seed)):
            writer.writerow([r.mechanism, r.seed, f"{r.val_top1:.6f}", f"{r.test_top1:.6f}", f"{r.seconds:.3f}"])
    rows = result.rows()
    txt_path = out_dir / "summary.txt"
    header = f"{'mechanism':<18}{'test_top1':>12}{'std':>8}{'val_top1':>12}{'ref UCF101 (not reproduced)':>30}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row['mechanism']:<18}{row['test_top1_mean']:>12.4f}{row['test_top1_std']:>8.4f}"
            f"{row['val_top1_mean']:>12.4f}{row['reference_ucf101']:>30.1f}"
        )
    txt_path.write_text("\n".join(lines) + "\n")
    json_path = out_dir / "summary.json"
    json_path.write_text(json.dumps({"rows": rows}, indent=2) + "\n")
    return {"csv": csv_path, "txt": txt_path, "json": json_path}


def load_runs_csv(path) -> ComparisonResult:
    """Re-parse a runs.csv back into a ComparisonResult (without metrics)."""
    runs = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            runs.append(
                RunResult(
                    mechanism=row["mechanism"],
                    seed=int(row["seed"]),
                    val_top1=float(row["val_top1"]),
                    test_top1=float(row["test_top1"]),
                    seconds=float(row["seconds"]),
                )
            )
    return ComparisonResult(runs=runs)
