"""Loss terms of the SKD-SRL objective.

All functions accept a single vector (``(K,)`` / ``(D,)``) or a batch
(``(n, K)`` / ``(n, D)``); the class/feature axis is always the last one.
Per-sample losses keep the leading batch shape; `total_loss` reduces to a
scalar by averaging over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .exceptions import DegenerateVectorError, InvalidInputError, ShapeError

LOG_FLOOR = 1e-12
NORM_EPS = 1e-12


@dataclass(frozen=True)
class HyperParams:
    """Temperature and loss weights (defaults: tau=10, alpha=0.1, beta=1)."""

    tau: float = 10.0
    alpha: float = 0.1
    beta: float = 1.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")


def _check_finite(name: str, x: torch.Tensor) -> None:
    if not torch.isfinite(x).all():
        raise InvalidInputError(f"{name} contains non-finite entries")


def softened_softmax(p: torch.Tensor, tau: float) -> torch.Tensor:
    """Temperature-scaled softmax over the last axis, max-subtracted for stability."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    _check_finite("logits", p)
    scaled = p / tau
    scaled = scaled - scaled.max(dim=-1, keepdim=True).values
    e = scaled.exp()
    return e / e.sum(dim=-1, keepdim=True)


def cross_entropy(q: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """-sum_k y_k log q_k with the log argument floored at ``LOG_FLOOR``."""
    if q.shape != y.shape:
        raise ShapeError(f"probability/label shape mismatch: {tuple(q.shape)} vs {tuple(y.shape)}")
    return -(y * q.clamp_min(LOG_FLOOR).log()).sum(dim=-1)


def kd_kl_loss(p1: torch.Tensor, p2: torch.Tensor, tau: float) -> torch.Tensor:
    """Soft-label distillation over the summed logits.

    The fused target softmax((p1+p2)/tau) is detached: no gradient flows
    through it, only through the two per-view student terms.
    """
    if p1.shape != p2.shape:
        raise ShapeError(f"logit shape mismatch: {tuple(p1.shape)} vs {tuple(p2.shape)}")
    target = softened_softmax(p1 + p2, tau).detach()
    log_t = target.clamp_min(LOG_FLOOR).log()
    out = torch.zeros_like(target[..., 0])
    for p in (p1, p2):
        log_s = softened_softmax(p, tau).clamp_min(LOG_FLOOR).log()
        out = out + (target * (log_t - log_s)).sum(dim=-1)
    return out


def neg_cosine(v: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    """Negative cosine similarity -(v/|v|)·(z/|z|), per sample."""
    if v.shape != z.shape:
        raise ShapeError(f"embedding shape mismatch: {tuple(v.shape)} vs {tuple(z.shape)}")
    vn = v.norm(dim=-1)
    zn = z.norm(dim=-1)
    if (vn <= NORM_EPS).any() or (zn <= NORM_EPS).any():
        raise DegenerateVectorError("cosine similarity of a (near-)zero vector")
    return -(v * z).sum(dim=-1) / (vn * zn)


def sim_loss(
    z1: torch.Tensor, z2: torch.Tensor, v1: torch.Tensor, v2: torch.Tensor
) -> torch.Tensor:
    """Symmetrized negative cosine with stop-gradient on the projector side.

    z1/z2 enter only through detached copies, so their gradient along this
    term is exactly zero; gradient flows through v1/v2 alone.
    """
    return 0.5 * neg_cosine(v1, z2.detach()) + 0.5 * neg_cosine(v2, z1.detach())


@dataclass
class LossBreakdown:
    """Scalar components of the training objective (batch means)."""

    total: torch.Tensor
    ce: torch.Tensor
    kl: torch.Tensor
    sim: torch.Tensor


def loss_components(outputs, y: torch.Tensor, hp: HyperParams) -> LossBreakdown:
    """Per-sample sum of all four objective terms, averaged over the batch.

    `outputs` is any object exposing batched p1, p2, z1, z2, v1, v2.
    """
    p1, p2 = outputs.p1, outputs.p2
    if p1.ndim == 0 or p1.shape[:-1] != y.shape[:-1]:
        raise ShapeError("logits and labels disagree on batch shape")
    if p1.ndim > 1 and p1.shape[0] == 0:
        raise InvalidInputError("empty batch")
    ce = cross_entropy(softened_softmax(p1, 1.0), y) + cross_entropy(
        softened_softmax(p2, 1.0), y
    )
    kl = kd_kl_loss(p1, p2, hp.tau)
    sim = sim_loss(outputs.z1, outputs.z2, outputs.v1, outputs.v2)
    total = (ce + hp.alpha * kl + hp.beta * sim).mean()
    return LossBreakdown(
        total=total, ce=ce.mean().detach(), kl=kl.mean().detach(), sim=sim.mean().detach()
    )


def total_loss(outputs, y: torch.Tensor, hp: HyperParams) -> torch.Tensor:
    """The full objective: CE on both views + alpha*KL + beta*sim, batch mean."""
    return loss_components(outputs, y, hp).total
