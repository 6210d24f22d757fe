"""
selection.py 단위 테스트
size / coherence / dispersion 점수, composite, top-K, semantic token 생성
"""

import math

import numpy as np
import pytest

from clustering import Centroid, Clustering
from errors import InvalidTopK, ZeroVector
from selection import (
    ClusterScore,
    composite_score,
    emit_semantic_tokens,
    resolve_k,
    score_clusters,
    score_coherence,
    score_dispersion,
    score_size,
    select_topk,
)


def _clustering(assignments, n_clusters):
    assignments = np.asarray(assignments)
    centroids = [
        Centroid(np.zeros(3), np.zeros(2), tuple(np.flatnonzero(assignments == j)))
        for j in range(n_clusters)
    ]
    return Clustering(
        centroids=centroids,
        assignments=assignments,
        objective_trace=[0.0],
        seed=0,
        lambda_f=0.5,
    )


# ============================================================
# 개별 점수
# ============================================================
class TestScores:
    def test_size(self):
        assert score_size(range(16), 16) == 1.0
        assert score_size(range(4), 16) == 0.25
        assert score_size([7], 64) == 0.015625

    def test_coherence_identical(self):
        feats = np.tile([0.3, -2.0, 1.0], (5, 1))
        assert score_coherence(feats) == pytest.approx(1.0)

    def test_coherence_singleton(self):
        assert score_coherence(np.array([[4.0, 1.0]])) == 1.0

    def test_coherence_orthogonal_pair(self):
        """직교 + 같은 norm -> 평균과의 cos 45° -> 1 − (1 − cos45°) = 0.7071"""
        feats = np.array([[2.0, 0.0], [0.0, 2.0]])
        assert score_coherence(feats) == pytest.approx(math.sqrt(0.5), abs=1e-12)

    def test_coherence_opposite_pair_is_zero(self):
        """평균 feature 가 0 이면 유사도 0 으로 본다"""
        assert score_coherence(np.array([[1.0, 0.0], [-1.0, 0.0]])) == 0.0

    def test_coherence_zero_vector(self):
        with pytest.raises(ZeroVector) as exc:
            score_coherence(np.array([[1.0, 0.0], [0.0, 0.0]]))
        assert exc.value.exit_code == 4

    def test_coherence_range(self, rng):
        for _ in range(50):
            value = score_coherence(rng.normal(size=(6, 3)))
            assert 0.0 <= value <= 1.0

    def test_dispersion(self):
        assert score_dispersion(np.array([[0.3, 0.3]])) == 0.0
        assert score_dispersion(np.array([[0.0, 0.0], [1.0, 1.0]])) == pytest.approx(0.5)
        assert score_dispersion(np.full((4, 2), 0.6)) == 0.0


# ============================================================
# composite_score
# ============================================================
class TestComposite:
    def test_isolated_terms(self):
        assert composite_score(0.25, 0.9, 0.1, (1, 0, 0)) == 0.25
        assert composite_score(0.25, 0.9, 0.5, (0, 0, 1)) == -0.5

    def test_all_ones(self):
        assert composite_score(0.25, 0.9, 0.1, (1, 1, 1)) == pytest.approx(1.05)

    def test_linear_in_each_eta(self, rng):
        for _ in range(1000):
            size, coh, disp = rng.random(3)
            etas = rng.random(3) * 3
            base = composite_score(size, coh, disp, tuple(etas))
            for axis, term in enumerate((size, coh, -disp)):
                bumped = etas.copy()
                bumped[axis] += 1.0
                delta = composite_score(size, coh, disp, tuple(bumped)) - base
                assert delta == pytest.approx(term, abs=1e-12)

    def test_score_clusters(self):
        clus = _clustering([0, 0, 1, 1], 2)
        feats = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        coords = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
        scores = score_clusters(clus, feats, coords)
        assert scores[0].size_score == 0.5
        assert scores[0].coherence_score == pytest.approx(1.0)
        assert scores[0].dispersion_score == 0.0
        assert scores[1].dispersion_score == pytest.approx(0.5)
        assert scores[0].composite > scores[1].composite
        assert set(scores[0].to_dict()) == {"size", "coherence", "dispersion", "composite"}


# ============================================================
# select_topk
# ============================================================
class TestSelectTopK:
    @pytest.mark.parametrize(
        "scores,k,expected",
        [
            ((0.9, 0.5, 0.1), 2, [0, 1]),
            ((0.5, 0.5), 1, [0]),
            ((0.1, 0.7, 0.7, 0.3), 2, [1, 2]),
            ((0.2, 0.4), 5, [1, 0]),
        ],
    )
    def test_examples(self, scores, k, expected):
        assert select_topk(scores, k) == expected

    def test_k_must_be_positive(self):
        with pytest.raises(InvalidTopK):
            select_topk([0.1], 0)

    def test_randomized_properties(self, rng):
        for _ in range(1000):
            m = int(rng.integers(1, 12))
            # 정수 격자로 만들어 동률이 자주 나오게
            scores = rng.integers(0, 4, size=m) / 4.0
            k = int(rng.integers(1, 15))
            picked = select_topk(scores, k)
            assert picked == select_topk(list(scores), k)
            assert len(picked) == min(k, m)
            assert len(set(picked)) == len(picked)
            keys = [(-scores[j], j) for j in picked]
            assert keys == sorted(keys)
            if len(picked) < m:
                worst_kept = min(scores[j] for j in picked)
                dropped = set(range(m)) - set(picked)
                assert all(scores[j] <= worst_kept for j in dropped)

    def test_raising_a_score_never_drops_it(self, rng):
        for _ in range(200):
            scores = rng.random(8)
            picked = select_topk(scores, 3)
            j = picked[-1]
            raised = scores.copy()
            raised[j] += 0.5
            assert j in select_topk(raised, 3)


class TestResolveK:
    def test_half_beta(self):
        assert resolve_k("half_beta", 50, 50) == 25
        assert resolve_k("half_beta", 5, 5) == 3

    def test_capped_at_cluster_count(self):
        assert resolve_k("fixed:10", 5, 4) == 4

    @pytest.mark.parametrize("rule", ["fixed:0", "fixed:x", "top"])
    def test_bad_rules(self, rule):
        with pytest.raises(InvalidTopK):
            resolve_k(rule, 5, 5)


# ============================================================
# emit_semantic_tokens
# ============================================================
class TestEmit:
    def test_identical_members(self):
        clus = _clustering([0, 0, 0], 1)
        feats = np.tile([1.5, -0.5], (3, 1))
        out = emit_semantic_tokens(clus, [0], feats, np.array([0.2, 0.3, 0.5]))
        np.testing.assert_allclose(out.tokens, [[1.5, -0.5]])

    def test_degenerate_weights(self):
        clus = _clustering([0, 0], 1)
        feats = np.array([[1.0, 2.0], [5.0, 5.0]])
        out = emit_semantic_tokens(clus, [0], feats, np.array([1.0, 0.0]))
        np.testing.assert_allclose(out.tokens, [[1.0, 2.0]])

    def test_weighted_mean(self):
        clus = _clustering([0, 0], 1)
        feats = np.array([[1.0, 0.0], [0.0, 1.0]])
        out = emit_semantic_tokens(clus, [0], feats, np.array([0.75, 0.25]))
        np.testing.assert_allclose(out.tokens, [[0.75, 0.25]])

    def test_zero_saliency_uses_plain_mean(self):
        clus = _clustering([0, 0], 1)
        feats = np.array([[1.0, 0.0], [0.0, 1.0]])
        out = emit_semantic_tokens(clus, [0], feats, np.zeros(2))
        np.testing.assert_allclose(out.tokens, [[0.5, 0.5]])

    def test_order_and_scores_follow_selection(self):
        clus = _clustering([0, 1, 2], 3)
        feats = np.eye(3)
        scores = [ClusterScore(0, 0, 0, float(j)) for j in range(3)]
        out = emit_semantic_tokens(clus, [2, 0], feats, np.ones(3), scores)
        assert out.source_clusters == (2, 0)
        assert len(out) == 2
        np.testing.assert_allclose(out.tokens, [[0, 0, 1], [1, 0, 0]])
        assert [s.composite for s in out.scores] == [2.0, 0.0]
