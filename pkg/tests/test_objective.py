"""
objective.py 단위 테스트
likelihood head, contribution objective, total loss, head 학습
"""

import math

import numpy as np
import pytest

from errors import EmptyCorpus, EmptyTokenSet, InvalidConfig
from fusion import LinearMap, assemble
from gradcheck import check_gradient
from objective import (
    ConfidenceHead,
    HeadHyper,
    HeadSample,
    LinearClassifier,
    contribution_from_likelihoods,
    contribution_objective,
    init_heads,
    lift_descriptor,
    likelihood,
    loss_and_grad,
    synthetic_task_loss,
    total_loss,
    train_heads,
)


def _samples(rng, n=4, raw_dim=3, dim=5, n_classes=2):
    return [
        HeadSample(
            pixel_raw=rng.normal(size=(6, raw_dim)),
            semantic_raw=rng.normal(size=(2, raw_dim)),
            text=rng.normal(size=(3, dim)),
            context=np.tanh(rng.normal(size=dim)),
            label=i % n_classes,
        )
        for i in range(n)
    ]


def _projector(rng, raw_dim=3, dim=5):
    return LinearMap(rng.normal(size=(dim, raw_dim)), rng.normal(size=dim) * 0.1)


def _random_heads(rng, dim=5, n_classes=2, projector=None):
    heads = init_heads(dim, n_classes, projector)
    return heads.with_vector(rng.normal(size=heads.to_vector().size) * 0.5)


# ============================================================
# likelihood
# ============================================================
class TestLikelihood:
    def test_zero_head_is_half(self, rng):
        head = ConfidenceHead.zeros(4)
        assert likelihood(rng.normal(size=4), rng.normal(size=4), head) == 0.5

    def test_saturation(self):
        head = ConfidenceHead(np.zeros(2), 20.0)
        assert likelihood(np.ones(2), np.ones(2), head) >= 0.999999

    def test_logit_one(self):
        head = ConfidenceHead(np.array([1.0, 0.0]), 0.0)
        assert likelihood(np.array([2.0, 5.0]), np.array([0.5, 1.0]), head) == pytest.approx(
            0.7311, abs=1e-4
        )

    def test_strictly_inside_unit_interval(self, rng):
        head = ConfidenceHead(rng.normal(size=3), 0.3)
        for _ in range(50):
            p = likelihood(rng.normal(size=3), rng.normal(size=3), head)
            assert 0.0 < p < 1.0

    def test_lift_descriptor(self):
        w_p = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])  # (d_c=3, D_t=2)
        c = lift_descriptor(np.array([0.5, 0.25, 0.0]), w_p)
        np.testing.assert_allclose(c, [0.5, 0.5])

    def test_lift_descriptor_is_linear(self):
        """context 는 W_pᵀ h 그대로 (비선형 없음)"""
        c = lift_descriptor(np.array([2.0, -3.0]), np.eye(2))
        np.testing.assert_array_equal(c, [2.0, -3.0])


# ============================================================
# contribution_objective
# ============================================================
class TestContribution:
    def test_constant_half(self):
        value = contribution_from_likelihoods([0.5, 0.5], [0.5], lam=2.0)
        assert value == pytest.approx(3.0 * math.log(0.5))

    def test_lambda_zero_drops_semantic(self):
        value = contribution_from_likelihoods([0.5, 0.25], [0.001], lam=0.0)
        assert value == pytest.approx(0.5 * (math.log(0.5) + math.log(0.25)))

    def test_worked_example(self):
        value = contribution_from_likelihoods([0.5, 0.25], [0.5], lam=1.0)
        assert value == pytest.approx(-1.7329, abs=1e-4)

    def test_empty_sets(self):
        with pytest.raises(EmptyTokenSet):
            contribution_from_likelihoods([], [0.5], 1.0)
        with pytest.raises(EmptyTokenSet) as exc:
            contribution_objective(
                np.ones((2, 3)),
                np.empty((0, 3)),
                np.ones(3),
                (ConfidenceHead.zeros(3), ConfidenceHead.zeros(3)),
            )
        assert exc.value.code == "objective.EmptyTokenSet"

    def test_never_positive(self, rng):
        for _ in range(100):
            heads = (
                ConfidenceHead(rng.normal(size=4) * 3, rng.normal()),
                ConfidenceHead(rng.normal(size=4) * 3, rng.normal()),
            )
            value = contribution_objective(
                rng.normal(size=(5, 4)), rng.normal(size=(2, 4)), rng.normal(size=4), heads
            )
            assert value <= 0.0

    def test_matches_likelihoods(self, rng):
        pix, sem, ctx = rng.normal(size=(3, 4)), rng.normal(size=(2, 4)), rng.normal(size=4)
        heads = (ConfidenceHead(rng.normal(size=4), 0.1), ConfidenceHead(rng.normal(size=4), -0.2))
        expected = contribution_from_likelihoods(
            [likelihood(t, ctx, heads[0]) for t in pix],
            [likelihood(t, ctx, heads[1]) for t in sem],
            lam=0.7,
        )
        assert contribution_objective(pix, sem, ctx, heads, lam=0.7) == pytest.approx(expected)

    def test_monotone_in_each_likelihood(self, rng):
        for _ in range(100):
            pix = rng.uniform(0.05, 0.9, size=4)
            sem = rng.uniform(0.05, 0.9, size=3)
            base = contribution_from_likelihoods(pix, sem, lam=0.5)
            i = int(rng.integers(4))
            raised = pix.copy()
            raised[i] += 0.05
            assert contribution_from_likelihoods(raised, sem, lam=0.5) > base
            raised_sem = sem.copy()
            raised_sem[0] += 0.05
            assert contribution_from_likelihoods(pix, raised_sem, lam=0.5) > base


# ============================================================
# total_loss / task loss
# ============================================================
class TestTotalLoss:
    def test_zero_weights_equal_task(self):
        assert total_loss(1.2345, 9.0, 7.0, 0.0, 0.0).total == 1.2345

    def test_worked_example(self):
        out = total_loss(1.0, 0.6931, 0.6931, 0.5, 0.5)
        assert out.total == pytest.approx(1.6931)
        assert out.to_dict()["lambda_d"] == 0.5

    def test_linear_in_lambda_d(self):
        a = total_loss(1.0, 0.8, 0.3, 0.2, 0.1)
        b = total_loss(1.0, 0.8, 0.3, 0.4, 0.1)
        assert (b.total - a.total) == pytest.approx(0.2 * 0.8, abs=1e-12)

    def test_reconstruction_identity(self, rng):
        for _ in range(50):
            task, pix, sem, ld, lt = rng.random(5) * 3
            out = total_loss(task, pix, sem, ld, lt)
            assert out.total == task + ld * pix + lt * sem

    def test_negative_weight(self):
        with pytest.raises(InvalidConfig):
            total_loss(1.0, 1.0, 1.0, -0.1, 0.0)

    def test_task_zero_classifier(self):
        seq = assemble(np.ones((2, 4)), np.empty((0, 4)), np.ones((1, 4)))
        assert synthetic_task_loss(seq, 1, LinearClassifier.zeros(3, 4)) == pytest.approx(
            math.log(3)
        )

    def test_task_saturation(self):
        clf = LinearClassifier(np.zeros((2, 3)), np.array([20.0, 0.0]))
        assert synthetic_task_loss(np.ones((2, 3)), 0, clf) <= 1e-8

    def test_task_example(self):
        clf = LinearClassifier(np.zeros((3, 2)), np.array([1.0, 0.0, 0.0]))
        assert synthetic_task_loss(np.ones((1, 2)), 0, clf) == pytest.approx(0.5514, abs=1e-4)

    def test_task_empty(self):
        with pytest.raises(EmptyTokenSet):
            synthetic_task_loss(np.empty((0, 2)), 0, LinearClassifier.zeros(2, 2))


# ============================================================
# gradient / head 학습
# ============================================================
class TestHeadTraining:
    def test_loss_matches_forward_pieces(self, rng):
        samples = _samples(rng, n=1)
        proj = _projector(rng)
        heads = _random_heads(rng)
        breakdown, _ = loss_and_grad(heads, samples, proj, HeadHyper())
        s = samples[0]
        pix = s.pixel_raw @ proj.weight.T + proj.bias
        sem = s.semantic_raw @ proj.weight.T + proj.bias
        seq = assemble(pix, sem, s.text)
        assert breakdown.task == pytest.approx(
            synthetic_task_loss(seq, s.label, heads.classifier)
        )
        expected_pixel = -np.mean(
            [math.log(likelihood(t, s.context, heads.pixel_head)) for t in pix]
        )
        assert breakdown.pixel == pytest.approx(expected_pixel)

    @pytest.mark.parametrize("train_projector", [False, True])
    def test_gradient_matches_finite_differences(self, rng, train_projector):
        samples = _samples(rng)
        proj = _projector(rng)
        heads = _random_heads(rng, projector=proj if train_projector else None)
        hyper = HeadHyper(lambda_d=0.7, lambda_t=0.4)
        _, grad = loss_and_grad(heads, samples, proj, hyper)
        check = check_gradient(
            lambda v: loss_and_grad(heads.with_vector(v), samples, proj, hyper)[0].total,
            grad,
            heads.to_vector(),
            n_coords=20,
            seed=3,
        )
        assert check.coords.size == 20
        assert check.max_rel_error <= 1e-4

    def test_zero_lr_keeps_params(self, rng):
        samples = _samples(rng)
        init = _random_heads(rng)
        result = train_heads(samples, _projector(rng), 2, HeadHyper(lr=0.0), init=init)
        assert result.heads.to_vector().tobytes() == init.to_vector().tobytes()
        assert result.loss_trace == []

    def test_trace_has_steps_plus_final(self, rng):
        result = train_heads(_samples(rng), _projector(rng), 2, HeadHyper(steps=7))
        assert len(result.totals()) == 8

    def test_no_samples(self, rng):
        with pytest.raises(EmptyCorpus):
            train_heads([], _projector(rng), 2)

    def test_sample_without_semantic_tokens(self, rng):
        sample = _samples(rng, n=1)[0]
        broken = HeadSample(
            sample.pixel_raw, np.empty((0, 3)), sample.text, sample.context, 0
        )
        with pytest.raises(EmptyTokenSet):
            loss_and_grad(init_heads(5, 2), [broken], _projector(rng))

    def test_projector_is_frozen_by_default(self, rng):
        proj = _projector(rng)
        result = train_heads(_samples(rng), proj, 2, HeadHyper(steps=3))
        assert result.heads.projector is None

    def test_trained_projector_moves(self, rng):
        proj = _projector(rng)
        result = train_heads(
            _samples(rng), proj, 2, HeadHyper(steps=5), train_projector=True
        )
        assert not np.array_equal(result.heads.projector.weight, proj.weight)
