import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from skdsrl.exceptions import DegenerateVectorError, InvalidInputError, ShapeError
from skdsrl.losses import (
    HyperParams,
    cross_entropy,
    kd_kl_loss,
    neg_cosine,
    sim_loss,
    softened_softmax,
    total_loss,
)
from skdsrl.model import BranchOutputs
from skdsrl import reference as ref


def t(x):
    return torch.tensor(x, dtype=torch.float64)


class TestSoftenedSoftmax:
    def test_symmetry(self):
        assert torch.allclose(softened_softmax(t([0.0, 0.0]), 1.0), t([0.5, 0.5]))

    def test_constant_logits(self):
        for c in (-3.0, 0.0, 7.5):
            for tau in (0.5, 1.0, 10.0):
                out = softened_softmax(t([c, c, c]), tau)
                assert torch.allclose(out, t([1 / 3] * 3))

    def test_scalar_value(self):
        out = softened_softmax(t([1.0, 0.0]), 1.0)
        # frozen: e/(e+1), 1/(e+1)
        assert torch.allclose(out, t([0.7310585786300049, 0.2689414213699951]))

    def test_sums_to_one_large_logits(self):
        out = softened_softmax(t([1000.0, 999.0, -1000.0]), 1.0)
        assert abs(float(out.sum()) - 1.0) < 1e-9
        assert torch.isfinite(out).all()

    def test_nonfinite_rejected(self):
        with pytest.raises(InvalidInputError):
            softened_softmax(t([float("nan"), 0.0]), 1.0)

    def test_bad_tau_rejected(self):
        with pytest.raises(ValueError):
            softened_softmax(t([1.0, 0.0]), 0.0)


class TestCrossEntropy:
    def test_perfect_prediction(self):
        val = float(cross_entropy(t([1.0, 0.0, 0.0, 0.0]), t([1.0, 0.0, 0.0, 0.0])))
        assert abs(val) < 1e-9

    def test_uniform(self):
        q = t([0.25] * 4)
        for cls in range(4):
            y = torch.zeros(4, dtype=torch.float64)
            y[cls] = 1.0
            assert abs(float(cross_entropy(q, y)) - math.log(4)) < 1e-12

    def test_scalar_value(self):
        val = float(cross_entropy(t([0.7, 0.3]), t([0.0, 1.0])))
        assert abs(val - 1.2039728043259361) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            cross_entropy(t([0.5, 0.5]), t([1.0, 0.0, 0.0]))


class TestKdKlLoss:
    def test_constant_logits_zero(self):
        assert abs(float(kd_kl_loss(t([2.0] * 5), t([2.0] * 5), 3.0))) < 1e-12

    def test_scalar_oracle_tau1(self):
        val = float(kd_kl_loss(t([1.0, 0.0]), t([0.0, 1.0]), 1.0))
        assert abs(val - 0.24022901391655505) < 1e-9

    def test_scalar_oracle_tau10(self):
        val = float(kd_kl_loss(t([1.0, 0.0]), t([0.0, 1.0]), 10.0))
        assert abs(val - 0.0024989590272512796) < 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            kd_kl_loss(t([1.0, 0.0]), t([1.0, 0.0, 0.0]), 1.0)

    @given(st.integers(0, 10_000))
    @settings(max_examples=100, deadline=None)
    def test_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 11))
        p1 = t(rng.standard_normal(k) * 3)
        p2 = t(rng.standard_normal(k) * 3)
        assert float(kd_kl_loss(p1, p2, float(rng.uniform(0.5, 20)))) >= 0.0

    def test_temperature_flattening(self):
        # holds for generic (unsaturated) logits; checked on 100 fixed seeds
        for seed in range(100):
            rng = np.random.default_rng(seed)
            k = int(rng.integers(2, 11))
            p1 = t(rng.standard_normal(k) * 2)
            p2 = t(rng.standard_normal(k) * 2)
            assert float(kd_kl_loss(p1, p2, 1000.0)) < float(kd_kl_loss(p1, p2, 1.0))


class TestNegCosine:
    def test_identical(self):
        assert abs(float(neg_cosine(t([1.0, 0.0]), t([1.0, 0.0]))) + 1.0) < 1e-12

    def test_orthogonal(self):
        assert abs(float(neg_cosine(t([1.0, 0.0]), t([0.0, 1.0])))) < 1e-12

    def test_parallel_scale_invariant(self):
        assert abs(float(neg_cosine(t([3.0, 4.0]), t([6.0, 8.0]))) + 1.0) < 1e-12

    def test_degenerate(self):
        with pytest.raises(DegenerateVectorError):
            neg_cosine(t([0.0, 0.0]), t([1.0, 0.0]))

    @given(st.integers(0, 10_000))
    @settings(max_examples=100, deadline=None)
    def test_range_and_scale(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(2, 65))
        v = t(rng.standard_normal(d) + 0.1)
        z = t(rng.standard_normal(d) + 0.1)
        c = float(neg_cosine(v, z))
        assert -1 - 1e-9 <= c <= 1 + 1e-9
        a, b = float(rng.uniform(0.1, 10)), float(rng.uniform(0.1, 10))
        assert abs(float(neg_cosine(a * v, b * z)) - c) <= 1e-9


class TestSimLoss:
    def test_all_aligned(self):
        e = t([1.0, 0.0, 0.0])
        assert abs(float(sim_loss(e, e, e, e)) + 1.0) < 1e-12

    def test_orthogonal_pairs(self):
        z1, z2 = t([0.0, 1.0]), t([1.0, 0.0])
        v1, v2 = t([0.0, 1.0]), t([1.0, 0.0])
        assert abs(float(sim_loss(z1, z2, v1, v2))) < 1e-12

    def test_scalar_value(self):
        s = 1 / math.sqrt(2)
        val = float(sim_loss(t([0.0, 1.0]), t([1.0, 0.0]), t([s, s]), t([1.0, 0.0])))
        assert abs(val - (-0.3535533905932738)) < 1e-9

    def test_stopgrad_exact_zero(self):
        z1 = t([0.3, -1.2, 0.5]).requires_grad_(True)
        z2 = t([1.1, 0.2, -0.4]).requires_grad_(True)
        v1 = t([0.9, 0.1, 0.3]).requires_grad_(True)
        v2 = t([-0.2, 0.7, 1.4]).requires_grad_(True)
        sim_loss(z1, z2, v1, v2).backward()
        assert z1.grad is None or float(z1.grad.abs().max()) == 0.0
        assert z2.grad is None or float(z2.grad.abs().max()) == 0.0
        assert float(v1.grad.abs().max()) > 0.0
        assert float(v2.grad.abs().max()) > 0.0


def _outputs(p1, p2, z1, z2, v1, v2):
    return BranchOutputs(None, None, t(p1), t(p2), t(z1), t(z2), t(v1), t(v2))


class TestTotalLoss:
    def test_reduces_to_two_view_ce(self):
        rng = np.random.default_rng(0)
        n, k, d = 4, 3, 5
        p1, p2 = rng.standard_normal((n, k)), rng.standard_normal((n, k))
        emb = [rng.standard_normal((n, d)) + 0.2 for _ in range(4)]
        y = np.eye(k)[rng.integers(0, k, n)]
        hp = HyperParams(tau=10.0, alpha=0.0, beta=0.0)
        got = float(total_loss(_outputs(p1, p2, *emb), t(y), hp))
        want = np.mean(
            [
                ref.ref_cross_entropy(ref.ref_softened_softmax(list(p1[i]), 1.0), list(y[i]))
                + ref.ref_cross_entropy(ref.ref_softened_softmax(list(p2[i]), 1.0), list(y[i]))
                for i in range(n)
            ]
        )
        assert abs(got - want) < 1e-9

    def test_single_sample_composition(self):
        hp = HyperParams(tau=10.0, alpha=0.1, beta=1.0)
        got = float(
            total_loss(
                _outputs([[0.0, 0.0]], [[0.0, 0.0]], [[1.0, 0.0]], [[1.0, 0.0]], [[1.0, 0.0]], [[1.0, 0.0]]),
                t([[1.0, 0.0]]),
                hp,
            )
        )
        assert abs(got - 0.3862943611198906) < 1e-9  # 2 ln 2 - 1

    def test_duplicate_batch_idempotent(self):
        rng = np.random.default_rng(1)
        k, d = 4, 6
        p1, p2 = rng.standard_normal((1, k)), rng.standard_normal((1, k))
        emb = [rng.standard_normal((1, d)) + 0.2 for _ in range(4)]
        y = np.eye(k)[[2]]
        hp = HyperParams()
        single = float(total_loss(_outputs(p1, p2, *emb), t(y), hp))
        double = float(
            total_loss(
                _outputs(*(np.concatenate([a, a]) for a in (p1, p2, *emb))),
                t(np.concatenate([y, y])),
                hp,
            )
        )
        assert abs(single - double) < 1e-12

    def test_empty_batch_rejected(self):
        empty = _outputs(
            np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 3)), np.zeros((0, 3)),
            np.zeros((0, 3)), np.zeros((0, 3)),
        )
        with pytest.raises(InvalidInputError):
            total_loss(empty, t(np.zeros((0, 2))), HyperParams())

    @given(st.integers(0, 10_000))
    @settings(max_examples=100, deadline=None)
    def test_view_swap_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        n, k, d = int(rng.integers(1, 9)), int(rng.integers(2, 11)), int(rng.integers(2, 33))
        p1, p2 = rng.standard_normal((n, k)), rng.standard_normal((n, k))
        z1, z2, v1, v2 = (rng.standard_normal((n, d)) + 0.1 for _ in range(4))
        y = np.eye(k)[rng.integers(0, k, n)]
        hp = HyperParams(tau=float(rng.uniform(0.5, 20)))
        a = float(total_loss(_outputs(p1, p2, z1, z2, v1, v2), t(y), hp))
        b = float(total_loss(_outputs(p2, p1, z2, z1, v2, v1), t(y), hp))
        assert abs(a - b) <= 1e-9


class TestHyperParams:
    def test_defaults(self):
        hp = HyperParams()
        assert (hp.tau, hp.alpha, hp.beta) == (10.0, 0.1, 1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            HyperParams(tau=0.0)
        with pytest.raises(ValueError):
            HyperParams(alpha=-0.1)
