"""Independent scalar-loop reference implementations of every loss term.

These deliberately avoid torch and vectorized numpy: plain Python floats and
`math`, so they share no code path with `skdsrl.losses`. They back the
`selfcheck` CLI command and the oracle-equivalence tests.
"""

from __future__ import annotations

import math

LOG_FLOOR = 1e-12


def ref_softened_softmax(p: list[float], tau: float) -> list[float]:
    m = max(x / tau for x in p)
    e = [math.exp(x / tau - m) for x in p]
    s = sum(e)
    return [x / s for x in e]


def ref_cross_entropy(q: list[float], y: list[float]) -> float:
    return -sum(yk * math.log(max(qk, LOG_FLOOR)) for yk, qk in zip(y, q))


def ref_kl(t: list[float], s: list[float]) -> float:
    return sum(
        tk * (math.log(max(tk, LOG_FLOOR)) - math.log(max(sk, LOG_FLOOR)))
        for tk, sk in zip(t, s)
    )


def ref_kd_kl_loss(p1: list[float], p2: list[float], tau: float) -> float:
    fused = [a + b for a, b in zip(p1, p2)]
    target = ref_softened_softmax(fused, tau)
    return ref_kl(target, ref_softened_softmax(p1, tau)) + ref_kl(
        target, ref_softened_softmax(p2, tau)
    )


def ref_neg_cosine(v: list[float], z: list[float]) -> float:
    nv = math.sqrt(sum(x * x for x in v))
    nz = math.sqrt(sum(x * x for x in z))
    return -sum(a * b for a, b in zip(v, z)) / (nv * nz)


def ref_sim_loss(z1, z2, v1, v2) -> float:
    return 0.5 * ref_neg_cosine(v1, z2) + 0.5 * ref_neg_cosine(v2, z1)


def ref_total_loss(samples, tau: float, alpha: float, beta: float) -> float:
    """`samples`: list of dicts with keys p1, p2, z1, z2, v1, v2, y (lists)."""
    acc = 0.0
    for s in samples:
        ce = ref_cross_entropy(
            ref_softened_softmax(s["p1"], 1.0), s["y"]
        ) + ref_cross_entropy(ref_softened_softmax(s["p2"], 1.0), s["y"])
        kl = ref_kd_kl_loss(s["p1"], s["p2"], tau)
        sim = ref_sim_loss(s["z1"], s["z2"], s["v1"], s["v2"])
        acc += ce + alpha * kl + beta * sim
    return acc / len(samples)
