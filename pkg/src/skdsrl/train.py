"""Training loop: two-view forward, SGD with momentum, plateau schedule.

The loop is single-threaded and fully deterministic under a fixed seed: one
numpy Generator drives shuffling and augmentation, torch only sees
deterministic forward/backward work. `SKD_DETERMINISTIC=1` additionally pins
torch to one thread and zeroes the wall-time field of the metrics records so
two runs produce bit-identical metrics files.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import losses
from .augment import AugmentConfig, augment_view, center_view
from .data import DatasetSplit, LabeledVideo, ViewBatch, batch_iter, one_hot
from .exceptions import CheckpointError, DivergenceError
from .losses import HyperParams, LossBreakdown, cross_entropy, loss_components, softened_softmax
from .model import (
    CHECKPOINT_VERSION,
    ModelSpec,
    SKDModel,
    build_model,
    clips_to_tensor,
    no_decay_param_names,
)

METRIC_FIELDS = ["epoch", "loss_total", "loss_ce", "loss_kl", "loss_sim", "val_top1", "lr", "seconds"]


def deterministic_mode() -> bool:
    return os.environ.get("SKD_DETERMINISTIC", "") == "1"


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 32
    max_epochs: int = 200
    plateau_patience: int = 10
    plateau_factor: float = 0.1
    min_lr: float = 1e-6
    hp: HyperParams = field(default_factory=HyperParams)
    seed: int = 0
    checkpoint_dir: str | None = None
    metrics_path: str | None = None

    def __post_init__(self):
        if self.lr <= 0 or not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise ValueError("invalid optimizer settings")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("invalid batch_size/max_epochs")
        if self.plateau_patience < 1 or not 0 < self.plateau_factor < 1:
            raise ValueError("invalid plateau settings")


@dataclass
class OptimizerState:
    velocity: dict[str, torch.Tensor]
    current_lr: float
    epochs_since_improvement: int = 0
    best_val_acc: float = -1.0


@dataclass
class MetricsRecord:
    epoch: int
    loss_total: float
    loss_ce: float
    loss_kl: float
    loss_sim: float
    val_top1: float
    lr: float
    seconds: float


def init_optimizer_state(model: SKDModel, cfg: TrainConfig) -> OptimizerState:
    velocity = {name: torch.zeros_like(p) for name, p in model.named_parameters()}
    return OptimizerState(velocity=velocity, current_lr=cfg.lr)


@torch.no_grad()
def sgd_step(
    model: SKDModel,
    state: OptimizerState,
    cfg: TrainConfig,
    no_decay: set[str],
) -> None:
    """v <- m*v + (g + wd*w); w <- w - lr*v. BN scale/shift get no decay."""
    for name, p in model.named_parameters():
        if p.grad is None:
            continue
        g = p.grad
        if not torch.isfinite(g).all():
            raise DivergenceError(f"non-finite gradient in parameter {name!r}")
        if cfg.weight_decay > 0 and name not in no_decay:
            g = g + cfg.weight_decay * p
        v = state.velocity[name]
        v.mul_(cfg.momentum).add_(g)
        p.add_(v, alpha=-state.current_lr)


def plateau_update(state: OptimizerState, val_acc: float, cfg: TrainConfig) -> None:
    """Drop lr by `plateau_factor` after `plateau_patience` non-improving epochs."""
    if val_acc > state.best_val_acc + 1e-6:
        state.best_val_acc = val_acc
        state.epochs_since_improvement = 0
        return
    state.epochs_since_improvement += 1
    if state.epochs_since_improvement >= cfg.plateau_patience:
        state.current_lr = max(state.current_lr * cfg.plateau_factor, cfg.min_lr)
        state.epochs_since_improvement = 0


@dataclass
class ClipBatch:
    """Single-view batch (baseline / KD mechanisms and evaluation)."""

    x: np.ndarray  # (n, T, 112, 112, 3)
    labels: np.ndarray  # (n, K)


def center_clips(videos: list[LabeledVideo], aug_cfg: AugmentConfig) -> np.ndarray:
    return np.stack([center_view(v.frames, aug_cfg) for v in videos])


@torch.no_grad()
def top1_accuracy(
    model: SKDModel,
    videos: list[LabeledVideo],
    aug_cfg: AugmentConfig,
    batch_size: int = 32,
    clips: np.ndarray | None = None,
) -> float:
    """Center-view, eval-mode, single-pass top-1. `clips` may be precomputed."""
    if clips is None:
        clips = center_clips(videos, aug_cfg)
    labels = np.array([v.label_index for v in videos])
    model.eval()
    correct = 0
    for start in range(0, len(videos), batch_size):
        x = clips_to_tensor(clips[start : start + batch_size])
        _, p, _, _ = model.forward_branch(x)
        correct += int((p.argmax(dim=1).numpy() == labels[start : start + batch_size]).sum())
    return correct / len(videos)


class Mechanism:
    """Per-batch loss strategy; subclasses define the five Table-II variants."""

    name = "base"

    def epoch_batches(self, videos, cfg: TrainConfig, rng, aug_cfg, num_classes):
        return batch_iter(videos, cfg.batch_size, rng, aug_cfg, num_classes)

    def compute_loss(self, model: SKDModel, batch, hp: HyperParams) -> LossBreakdown:
        raise NotImplementedError


class SkdSrlMechanism(Mechanism):
    name = "skd_srl"

    def compute_loss(self, model, batch: ViewBatch, hp):
        outputs = model.siamese_forward(clips_to_tensor(batch.x1), clips_to_tensor(batch.x2))
        return loss_components(outputs, torch.from_numpy(batch.labels), hp)


class SelfKdMechanism(Mechanism):
    """Soft-label self-distillation only: the full objective with beta = 0."""

    name = "self_kd"

    def compute_loss(self, model, batch: ViewBatch, hp):
        hp0 = HyperParams(tau=hp.tau, alpha=hp.alpha, beta=0.0)
        outputs = model.siamese_forward(clips_to_tensor(batch.x1), clips_to_tensor(batch.x2))
        return loss_components(outputs, torch.from_numpy(batch.labels), hp0)


class BaselineAugmentMechanism(Mechanism):
    """Cross-entropy on both augmented views, no distillation terms."""

    name = "baseline_augment"

    def compute_loss(self, model, batch: ViewBatch, hp):
        y = torch.from_numpy(batch.labels)
        _, p1, _, _ = model.forward_branch(clips_to_tensor(batch.x1))
        _, p2, _, _ = model.forward_branch(clips_to_tensor(batch.x2))
        ce = cross_entropy(softened_softmax(p1, 1.0), y) + cross_entropy(softened_softmax(p2, 1.0), y)
        total = ce.mean()
        zero = torch.zeros(())
        return LossBreakdown(total=total, ce=total.detach(), kl=zero, sim=zero)


class BaselineMechanism(Mechanism):
    """Independent training: cross-entropy on the deterministic center view."""

    name = "baseline"

    def __init__(self):
        self._cache: np.ndarray | None = None

    def epoch_batches(self, videos, cfg, rng, aug_cfg, num_classes):
        if self._cache is None:
            self._cache = center_clips(videos, aug_cfg)
        labels = np.stack([one_hot(v.label_index, num_classes) for v in videos])
        order = rng.permutation(len(videos))
        for start in range(0, len(videos), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            yield ClipBatch(x=self._cache[idx], labels=labels[idx])

    def compute_loss(self, model, batch: ClipBatch, hp):
        y = torch.from_numpy(batch.labels)
        _, p, _, _ = model.forward_branch(clips_to_tensor(batch.x))
        total = cross_entropy(softened_softmax(p, 1.0), y).mean()
        zero = torch.zeros(())
        return LossBreakdown(total=total, ce=total.detach(), kl=zero, sim=zero)


class KdMechanism(Mechanism):
    """Classic teacher-student distillation from a frozen larger encoder."""

    name = "kd"

    def __init__(self, teacher: SKDModel):
        self.teacher = teacher
        self.teacher.eval()

    def epoch_batches(self, videos, cfg, rng, aug_cfg, num_classes):
        order = rng.permutation(len(videos))
        for start in range(0, len(videos), cfg.batch_size):
            chunk = [videos[i] for i in order[start : start + cfg.batch_size]]
            x = np.stack([augment_view(v.frames, aug_cfg, rng) for v in chunk])
            labels = np.stack([one_hot(v.label_index, num_classes) for v in chunk])
            yield ClipBatch(x=x, labels=labels)

    def compute_loss(self, model, batch: ClipBatch, hp):
        y = torch.from_numpy(batch.labels)
        x = clips_to_tensor(batch.x)
        _, p, _, _ = model.forward_branch(x)
        with torch.no_grad():
            _, p_t, _, _ = self.teacher.forward_branch(x)
        ce = cross_entropy(softened_softmax(p, 1.0), y)
        target = softened_softmax(p_t, hp.tau)
        log_t = target.clamp_min(losses.LOG_FLOOR).log()
        log_s = softened_softmax(p, hp.tau).clamp_min(losses.LOG_FLOOR).log()
        kl = (target * (log_t - log_s)).sum(dim=-1)
        total = (ce + hp.alpha * kl).mean()
        return LossBreakdown(total=total, ce=ce.mean().detach(), kl=kl.mean().detach(), sim=torch.zeros(()))


def _rng_state_json(rng: np.random.Generator) -> str:
    return json.dumps(rng.bit_generator.state)


def _restore_rng(state_json: str) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = json.loads(state_json)
    return rng


def save_checkpoint(
    path,
    model: SKDModel,
    opt_state: OptimizerState,
    epoch: int,
    rng: np.random.Generator,
    metrics: list[MetricsRecord],
    seed: int,
) -> None:
    """Full resumable training state as one named-array .npz file."""
    arrays = {f"param.{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    arrays.update({f"velocity.{k}": v.cpu().numpy() for k, v in opt_state.velocity.items()})
    arrays["torch_rng"] = torch.get_rng_state().numpy()
    meta = {
        "version": CHECKPOINT_VERSION,
        "spec": asdict(model.spec),
        "seed": seed,
        "epoch": epoch,
        "current_lr": opt_state.current_lr,
        "epochs_since_improvement": opt_state.epochs_since_improvement,
        "best_val_acc": opt_state.best_val_acc,
        "np_rng": _rng_state_json(rng),
        "metrics": [asdict(m) for m in metrics],
    }
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    tmp = str(path) + ".tmp.npz"  # keep the .npz suffix so np.savez does not append one
    np.savez(tmp, **arrays)
    os.replace(tmp, path)


def load_checkpoint(path):
    """Returns (model, opt_state, epoch, rng, metrics, meta) for resuming."""
    from .model import _read_npz

    data = _read_npz(path)
    if "__meta__" not in data:
        raise CheckpointError(f"checkpoint {path} has no metadata record")
    meta = json.loads(bytes(data["__meta__"]).decode())
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"incompatible checkpoint version {meta.get('version')} (expected {CHECKPOINT_VERSION})"
        )
    model = SKDModel(ModelSpec(**meta["spec"]))
    try:
        state = {
            k[len("param.") :]: torch.from_numpy(data[k])
            for k in data
            if k.startswith("param.")
        }
        model.load_state_dict(state)
        velocity = {
            k[len("velocity.") :]: torch.from_numpy(data[k].copy())
            for k in data
            if k.startswith("velocity.")
        }
        torch.set_rng_state(torch.from_numpy(data["torch_rng"].copy()))
    except (KeyError, RuntimeError) as exc:
        raise CheckpointError(f"checkpoint {path} is incomplete: {exc}") from exc
    opt_state = OptimizerState(
        velocity=velocity,
        current_lr=meta["current_lr"],
        epochs_since_improvement=meta["epochs_since_improvement"],
        best_val_acc=meta["best_val_acc"],
    )
    rng = _restore_rng(meta["np_rng"])
    metrics = [MetricsRecord(**m) for m in meta["metrics"]]
    return model, opt_state, meta["epoch"], rng, metrics, meta


def write_metrics(path, metrics: list[MetricsRecord]) -> None:
    with open(path, "w") as fh:
        for m in metrics:
            fh.write(json.dumps({k: getattr(m, k) for k in METRIC_FIELDS}) + "\n")


def run_training(
    split: DatasetSplit,
    cfg: TrainConfig,
    mechanism: Mechanism,
    model_spec: ModelSpec | None = None,
    aug_cfg: AugmentConfig | None = None,
    resume_from: str | None = None,
    log=None,
) -> tuple[SKDModel, list[MetricsRecord]]:
    """Run one training job under `mechanism`; returns the model and metrics."""
    if not split.train or not split.val:
        raise ValueError("train and val splits must be nonempty")
    aug_cfg = aug_cfg or AugmentConfig()
    if deterministic_mode():
        torch.set_num_threads(1)
    if resume_from is not None:
        model, opt_state, start_epoch, rng, metrics, _ = load_checkpoint(resume_from)
    else:
        if model_spec is None:
            raise ValueError("model_spec required when not resuming")
        model = build_model(model_spec, cfg.seed)
        opt_state = init_optimizer_state(model, cfg)
        rng = np.random.default_rng(cfg.seed)
        start_epoch = 0
        metrics = []
    no_decay = no_decay_param_names(model)
    val_clips = center_clips(split.val, aug_cfg)
    ckpt_dir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None
    if ckpt_dir:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    for epoch in range(start_epoch, cfg.max_epochs):
        t0 = time.perf_counter()
        model.train()
        sums = {"total": 0.0, "ce": 0.0, "kl": 0.0, "sim": 0.0}
        n_batches = 0
        for batch in mechanism.epoch_batches(split.train, cfg, rng, aug_cfg, split.num_classes):
            breakdown = mechanism.compute_loss(model, batch, cfg.hp)
            if not torch.isfinite(breakdown.total):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            model.zero_grad(set_to_none=True)
            breakdown.total.backward()
            sgd_step(model, opt_state, cfg, no_decay)
            sums["total"] += float(breakdown.total.detach())
            sums["ce"] += float(breakdown.ce)
            sums["kl"] += float(breakdown.kl)
            sums["sim"] += float(breakdown.sim)
            n_batches += 1
        val_top1 = top1_accuracy(model, split.val, aug_cfg, cfg.batch_size, clips=val_clips)
        lr_before = opt_state.current_lr
        plateau_update(opt_state, val_top1, cfg)
        seconds = 0.0 if deterministic_mode() else time.perf_counter() - t0
        rec = MetricsRecord(
            epoch=epoch,
            loss_total=sums["total"] / max(n_batches, 1),
            loss_ce=sums["ce"] / max(n_batches, 1),
            loss_kl=sums["kl"] / max(n_batches, 1),
            loss_sim=sums["sim"] / max(n_batches, 1),
            val_top1=val_top1,
            lr=lr_before,
            seconds=seconds,
        )
        metrics.append(rec)
        if log:
            log(f"epoch {epoch}: loss={rec.loss_total:.4f} val_top1={val_top1:.3f} lr={lr_before:g}")
        if cfg.metrics_path:
            write_metrics(cfg.metrics_path, metrics)
        if ckpt_dir:
            save_checkpoint(
                ckpt_dir / "last.ckpt.npz", model, opt_state, epoch + 1, rng, metrics, cfg.seed
            )
    if cfg.metrics_path and cfg.max_epochs == 0:
        write_metrics(cfg.metrics_path, metrics)
    return model, metrics


def train_skd_srl(
    model_spec: ModelSpec,
    split: DatasetSplit,
    cfg: TrainConfig,
    aug_cfg: AugmentConfig | None = None,
    log=None,
) -> tuple[SKDModel, list[MetricsRecord]]:
    """Full SKD-SRL training; returns the trained model (encoder inside) and metrics."""
    return run_training(split, cfg, SkdSrlMechanism(), model_spec, aug_cfg, log=log)
