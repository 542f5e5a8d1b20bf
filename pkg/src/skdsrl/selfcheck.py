"""Runnable property suites: oracle equivalence, gradient checks, invariants.

Every suite returns a CheckResult so the `selfcheck` CLI subcommand can print
one pass/fail line per property. The pytest suite reuses these functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from . import reference as ref
from .losses import (
    HyperParams,
    cross_entropy,
    kd_kl_loss,
    neg_cosine,
    sim_loss,
    softened_softmax,
    total_loss,
)
from .model import BranchOutputs

N_INSTANCES = 100
ORACLE_ATOL = 1e-6
GRAD_RTOL = 1e-4
FD_H = 1e-5


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def finite_diff_grad(f, x: torch.Tensor, h: float = FD_H) -> torch.Tensor:
    """Central finite differences of scalar-valued f at float64 tensor x."""
    g = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + h
        fp = float(f())
        flat[i] = orig - h
        fm = float(f())
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def _rel_err(a: torch.Tensor, b: torch.Tensor) -> float:
    denom = max(float(a.norm()), float(b.norm()), 1e-8)
    return float((a - b).norm()) / denom


def _rand_logits(rng, k):
    return rng.standard_normal(k) * 2.0


def _rand_unit_free(rng, d):
    v = rng.standard_normal(d)
    while np.linalg.norm(v) < 1e-3:
        v = rng.standard_normal(d)
    return v


def check_oracle_losses(seed: int = 0, n: int = N_INSTANCES) -> list[CheckResult]:
    """Vectorized torch losses vs scalar-loop references, 1e-6 absolute."""
    rng = np.random.default_rng(seed)
    worst = {"softmax": 0.0, "ce": 0.0, "kd_kl": 0.0, "neg_cos": 0.0, "sim": 0.0, "total": 0.0}
    for _ in range(n):
        k = int(rng.integers(2, 11))
        d = int(rng.integers(2, 65))
        tau = float(rng.uniform(0.5, 20.0))
        p1, p2 = _rand_logits(rng, k), _rand_logits(rng, k)
        y = np.zeros(k)
        y[rng.integers(0, k)] = 1.0
        z1, z2, v1, v2 = (_rand_unit_free(rng, d) for _ in range(4))

        t_p1 = torch.tensor(p1)
        got = softened_softmax(t_p1, tau).numpy()
        worst["softmax"] = max(worst["softmax"], float(np.abs(got - ref.ref_softened_softmax(list(p1), tau)).max()))

        q = np.array(ref.ref_softened_softmax(list(p1), 1.0))
        got = float(cross_entropy(torch.tensor(q), torch.tensor(y)))
        worst["ce"] = max(worst["ce"], abs(got - ref.ref_cross_entropy(list(q), list(y))))

        got = float(kd_kl_loss(t_p1, torch.tensor(p2), tau))
        worst["kd_kl"] = max(worst["kd_kl"], abs(got - ref.ref_kd_kl_loss(list(p1), list(p2), tau)))

        got = float(neg_cosine(torch.tensor(v1), torch.tensor(z2)))
        worst["neg_cos"] = max(worst["neg_cos"], abs(got - ref.ref_neg_cosine(list(v1), list(z2))))

        got = float(sim_loss(torch.tensor(z1), torch.tensor(z2), torch.tensor(v1), torch.tensor(v2)))
        worst["sim"] = max(worst["sim"], abs(got - ref.ref_sim_loss(list(z1), list(z2), list(v1), list(v2))))

        hp = HyperParams(tau=tau, alpha=0.1, beta=1.0)
        outputs = BranchOutputs(
            r1=None, r2=None,
            p1=torch.tensor(p1)[None], p2=torch.tensor(p2)[None],
            z1=torch.tensor(z1)[None], z2=torch.tensor(z2)[None],
            v1=torch.tensor(v1)[None], v2=torch.tensor(v2)[None],
        )
        got = float(total_loss(outputs, torch.tensor(y)[None], hp))
        want = ref.ref_total_loss(
            [dict(p1=list(p1), p2=list(p2), z1=list(z1), z2=list(z2), v1=list(v1), v2=list(v2), y=list(y))],
            tau, 0.1, 1.0,
        )
        worst["total"] = max(worst["total"], abs(got - want))
    return [
        CheckResult(f"oracle:{name}", err < ORACLE_ATOL, f"max abs err {err:.2e}")
        for name, err in worst.items()
    ]


def check_gradients(seed: int = 0, n: int = N_INSTANCES) -> list[CheckResult]:
    """Autograd vs central finite differences (float64, h=1e-5, rel err < 1e-4).

    The KL target and the stop-gradient arguments are held fixed in the
    finite-difference oracle, matching the declared gradient semantics.
    """
    rng = np.random.default_rng(seed)
    worst = {"cross_entropy": 0.0, "kd_kl": 0.0, "neg_cosine": 0.0, "sim": 0.0, "total": 0.0}
    for _ in range(n):
        k = int(rng.integers(2, 11))
        d = int(rng.integers(2, 17))
        tau = float(rng.uniform(0.5, 10.0))
        y = torch.zeros(k, dtype=torch.float64)
        y[int(rng.integers(0, k))] = 1.0

        # cross_entropy wrt probabilities (kept away from the clamp floor)
        q = torch.tensor(rng.uniform(0.05, 1.0, size=k))
        q = (q / q.sum()).requires_grad_(True)
        cross_entropy(q, y).backward()
        qb = q.detach().clone()
        fd = finite_diff_grad(lambda: cross_entropy(qb, y), qb)
        worst["cross_entropy"] = max(worst["cross_entropy"], _rel_err(q.grad, fd))

        # kd_kl student paths: target frozen at the unperturbed fused logits
        p1 = torch.tensor(_rand_logits(rng, k), requires_grad=True)
        p2 = torch.tensor(_rand_logits(rng, k), requires_grad=True)
        kd_kl_loss(p1, p2, tau).backward()
        target = softened_softmax((p1 + p2).detach(), tau)

        def frozen_kd(p1v, p2v):
            log_t = target.clamp_min(1e-12).log()
            out = 0.0
            for p in (p1v, p2v):
                log_s = softened_softmax(p, tau).clamp_min(1e-12).log()
                out = out + (target * (log_t - log_s)).sum()
            return out

        p1b, p2b = p1.detach().clone(), p2.detach().clone()
        fd1 = finite_diff_grad(lambda: frozen_kd(p1b, p2b), p1b)
        fd2 = finite_diff_grad(lambda: frozen_kd(p1b, p2b), p2b)
        worst["kd_kl"] = max(worst["kd_kl"], _rel_err(p1.grad, fd1), _rel_err(p2.grad, fd2))

        # neg_cosine wrt both arguments
        v = torch.tensor(_rand_unit_free(rng, d), requires_grad=True)
        z = torch.tensor(_rand_unit_free(rng, d), requires_grad=True)
        neg_cosine(v, z).backward()
        vb, zb = v.detach().clone(), z.detach().clone()
        fdv = finite_diff_grad(lambda: neg_cosine(vb, zb), vb)
        fdz = finite_diff_grad(lambda: neg_cosine(vb, zb), zb)
        worst["neg_cosine"] = max(worst["neg_cosine"], _rel_err(v.grad, fdv), _rel_err(z.grad, fdz))

        # sim_loss v-paths (z entries are stop-gradient constants)
        z1, z2, v1, v2 = (torch.tensor(_rand_unit_free(rng, d), requires_grad=True) for _ in range(4))
        sim_loss(z1, z2, v1, v2).backward()
        z1b, z2b, v1b, v2b = (t.detach().clone() for t in (z1, z2, v1, v2))
        fdv1 = finite_diff_grad(lambda: sim_loss(z1b, z2b, v1b, v2b), v1b)
        fdv2 = finite_diff_grad(lambda: sim_loss(z1b, z2b, v1b, v2b), v2b)
        worst["sim"] = max(worst["sim"], _rel_err(v1.grad, fdv1), _rel_err(v2.grad, fdv2))

        # total_loss wrt logits and predictor outputs
        hp = HyperParams(tau=tau, alpha=0.1, beta=1.0)
        tp1 = torch.tensor(_rand_logits(rng, k), requires_grad=True)
        tp2 = torch.tensor(_rand_logits(rng, k), requires_grad=True)
        tz1, tz2 = (torch.tensor(_rand_unit_free(rng, d)) for _ in range(2))
        tv1, tv2 = (torch.tensor(_rand_unit_free(rng, d), requires_grad=True) for _ in range(2))
        out = BranchOutputs(None, None, tp1[None], tp2[None], tz1[None], tz2[None], tv1[None], tv2[None])
        total_loss(out, y[None], hp).backward()
        ttarget = softened_softmax((tp1 + tp2).detach(), tau)

        def frozen_total(p1v, p2v, v1v, v2v):
            ce = cross_entropy(softened_softmax(p1v, 1.0), y) + cross_entropy(softened_softmax(p2v, 1.0), y)
            log_t = ttarget.clamp_min(1e-12).log()
            kl = 0.0
            for p in (p1v, p2v):
                log_s = softened_softmax(p, tau).clamp_min(1e-12).log()
                kl = kl + (ttarget * (log_t - log_s)).sum()
            sim = 0.5 * neg_cosine(v1v, tz2) + 0.5 * neg_cosine(v2v, tz1)
            return ce + hp.alpha * kl + hp.beta * sim

        bufs = [t.detach().clone() for t in (tp1, tp2, tv1, tv2)]
        fn = lambda: frozen_total(bufs[0], bufs[1], bufs[2], bufs[3])
        for grad_t, buf in zip((tp1.grad, tp2.grad, tv1.grad, tv2.grad), bufs):
            worst["total"] = max(worst["total"], _rel_err(grad_t, finite_diff_grad(fn, buf)))
    return [
        CheckResult(f"gradient:{name}", err < GRAD_RTOL, f"max rel err {err:.2e}")
        for name, err in worst.items()
    ]


def check_stopgrad_isolation(seed: int = 0, n: int = 20) -> list[CheckResult]:
    """sim_loss gradient wrt z1/z2 is exactly zero; wrt v1/v2 generically nonzero."""
    rng = np.random.default_rng(seed)
    ok_zero, ok_nonzero = True, True
    for _ in range(n):
        d = int(rng.integers(2, 33))
        z1, z2, v1, v2 = (torch.tensor(_rand_unit_free(rng, d), requires_grad=True) for _ in range(4))
        sim_loss(z1, z2, v1, v2).backward()
        if z1.grad is not None and float(z1.grad.abs().max()) != 0.0:
            ok_zero = False
        if z2.grad is not None and float(z2.grad.abs().max()) != 0.0:
            ok_zero = False
        if float(v1.grad.abs().max()) == 0.0 or float(v2.grad.abs().max()) == 0.0:
            ok_nonzero = False
    return [
        CheckResult("stopgrad:z-paths zero", ok_zero),
        CheckResult("stopgrad:v-paths nonzero", ok_nonzero),
    ]


def check_invariants(seed: int = 0, n: int = N_INSTANCES) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    # non-negativity and temperature flattening of kd_kl
    nonneg, flatten = True, True
    for _ in range(n):
        k = int(rng.integers(2, 11))
        p1, p2 = torch.tensor(_rand_logits(rng, k)), torch.tensor(_rand_logits(rng, k))
        if float(kd_kl_loss(p1, p2, float(rng.uniform(0.5, 20)))) < 0:
            nonneg = False
        if not torch.allclose(p1, p2) and float(kd_kl_loss(p1, p2, 1000.0)) >= float(kd_kl_loss(p1, p2, 1.0)):
            flatten = False
    results.append(CheckResult("invariant:kd_kl nonneg", nonneg))
    results.append(CheckResult("invariant:temperature flattening", flatten))
    # neg_cosine range and scale invariance
    in_range, scale_inv = True, True
    for _ in range(n):
        d = int(rng.integers(2, 65))
        v = torch.tensor(_rand_unit_free(rng, d))
        z = torch.tensor(_rand_unit_free(rng, d))
        c = float(neg_cosine(v, z))
        if not -1 - 1e-9 <= c <= 1 + 1e-9:
            in_range = False
        a, b = float(rng.uniform(0.1, 10)), float(rng.uniform(0.1, 10))
        if abs(float(neg_cosine(a * v, b * z)) - c) > 1e-9:
            scale_inv = False
    results.append(CheckResult("invariant:neg_cosine range", in_range))
    results.append(CheckResult("invariant:scale invariance", scale_inv))
    # view-swap symmetry of total_loss
    symmetric = True
    for _ in range(n):
        k, d, nb = int(rng.integers(2, 11)), int(rng.integers(2, 33)), int(rng.integers(1, 9))
        hp = HyperParams(tau=float(rng.uniform(0.5, 20)), alpha=0.1, beta=1.0)
        p1, p2 = (torch.tensor(rng.standard_normal((nb, k))) for _ in range(2))
        z1, z2, v1, v2 = (torch.tensor(rng.standard_normal((nb, d))) for _ in range(4))
        y = torch.zeros((nb, k), dtype=torch.float64)
        y[torch.arange(nb), torch.tensor(rng.integers(0, k, size=nb))] = 1.0
        a = float(total_loss(BranchOutputs(None, None, p1, p2, z1, z2, v1, v2), y, hp))
        b = float(total_loss(BranchOutputs(None, None, p2, p1, z2, z1, v2, v1), y, hp))
        if abs(a - b) > 1e-9:
            symmetric = False
    results.append(CheckResult("invariant:view-swap symmetry", symmetric))
    return results


def run_all(seed: int = 0) -> list[CheckResult]:
    out = []
    out += check_oracle_losses(seed)
    out += check_gradients(seed)
    out += check_stopgrad_isolation(seed)
    out += check_invariants(seed)
    return out
