"""
fusion.py 단위 테스트
projector bank, F_mix 조립 순서, token budget 계산
"""

import numpy as np
import pytest

from errors import BadGamma, DimensionMismatch
from fusion import (
    LinearMap,
    ProjectorBank,
    assemble,
    make_projector_bank,
    project,
    token_budget,
)
from tensors import ROLE_PIXEL, ROLE_SEMANTIC, ROLE_TEXT


def _bank(*maps):
    return ProjectorBank(tuple(maps))


# ============================================================
# project
# ============================================================
class TestProject:
    def test_identity_map(self, rng):
        tokens = rng.normal(size=(5, 3))
        bank = _bank(LinearMap(np.eye(3), np.zeros(3)))
        np.testing.assert_array_equal(project(tokens, bank, 0), tokens)

    def test_zero_weights_give_bias(self, rng):
        bias = np.array([1.0, -2.0])
        bank = _bank(LinearMap(np.zeros((2, 4)), bias))
        out = project(rng.normal(size=(3, 4)), bank, 0)
        np.testing.assert_array_equal(out, np.tile(bias, (3, 1)))

    def test_matrix_vector(self):
        bank = _bank(LinearMap(np.array([[1.0, 0.0], [0.0, 2.0]]), np.zeros(2)))
        np.testing.assert_array_equal(project(np.array([3.0, 4.0]), bank, 0), [[3.0, 8.0]])

    def test_gamma_selects_map(self):
        bank = _bank(
            LinearMap(np.eye(2), np.zeros(2)),
            LinearMap(2 * np.eye(2), np.zeros(2)),
        )
        np.testing.assert_array_equal(project(np.ones((1, 2)), bank, 1), [[2.0, 2.0]])

    @pytest.mark.parametrize("gamma", [-1, 2])
    def test_bad_gamma(self, gamma):
        bank = make_projector_bank(2, 3, 4, seed=0)
        with pytest.raises(BadGamma) as exc:
            project(np.ones((1, 3)), bank, gamma)
        assert exc.value.code == "fusion.BadGamma"

    def test_dim_mismatch(self):
        bank = make_projector_bank(1, 3, 4, seed=0)
        with pytest.raises(DimensionMismatch):
            project(np.ones((2, 5)), bank, 0)

    def test_empty_tokens(self):
        bank = make_projector_bank(1, 3, 4, seed=0)
        assert project(np.empty((0, 3)), bank, 0).shape == (0, 4)

    def test_bank_is_seeded(self):
        a = make_projector_bank(3, 8, 64, seed=5)
        b = make_projector_bank(3, 8, 64, seed=5)
        for ma, mb in zip(a.maps, b.maps, strict=True):
            np.testing.assert_array_equal(ma.weight, mb.weight)
        assert a.out_dim == 64
        assert len(a) == 3

    def test_bank_rejects_mixed_output_dims(self):
        with pytest.raises(DimensionMismatch):
            _bank(LinearMap(np.eye(2), np.zeros(2)), LinearMap(np.eye(3), np.zeros(3)))


# ============================================================
# assemble
# ============================================================
class TestAssemble:
    def test_no_semantic(self, rng):
        seq = assemble(rng.normal(size=(4, 3)), np.empty((0, 3)), rng.normal(size=(2, 3)))
        assert seq.roles == (ROLE_PIXEL,) * 4 + (ROLE_TEXT,) * 2

    def test_counts(self):
        seq = assemble(np.zeros((256, 8)), np.zeros((25, 8)), np.zeros((12, 8)))
        assert len(seq) == 293
        assert (
            seq.role_count(ROLE_PIXEL),
            seq.role_count(ROLE_SEMANTIC),
            seq.role_count(ROLE_TEXT),
        ) == (256, 25, 12)

    def test_role_order(self):
        seq = assemble(np.ones((1, 2)), 2 * np.ones((1, 2)), 3 * np.ones((1, 2)))
        assert list(seq.roles) == ["pixel", "semantic", "text"]

    def test_tokens_preserved_bitwise(self, rng):
        pix, sem, txt = rng.normal(size=(5, 4)), rng.normal(size=(2, 4)), rng.normal(size=(3, 4))
        seq = assemble(pix, sem, txt)
        np.testing.assert_array_equal(seq.tokens, np.vstack([pix, sem, txt]))

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            assemble(np.zeros((2, 3)), np.zeros((1, 4)), np.zeros((1, 3)))


# ============================================================
# token_budget
# ============================================================
class TestTokenBudget:
    def test_default_overhead(self):
        budget = token_budget(assemble(np.zeros((256, 2)), np.zeros((25, 2)), np.zeros((12, 2))))
        assert budget.overhead_ratio == pytest.approx(0.0977, abs=1e-4)
        assert budget.total == 293

    def test_no_semantic(self):
        budget = token_budget(assemble(np.zeros((10, 2)), np.empty((0, 2)), np.zeros((3, 2))))
        assert budget.overhead_ratio == 0.0
        assert budget.n_semantic == 0

    def test_arithmetic(self):
        budget = token_budget(assemble(np.zeros((100, 2)), np.zeros((10, 2)), np.zeros((5, 2))))
        assert budget.total == 115
        assert budget.overhead_ratio == 0.1
        assert budget.to_dict()["n_text"] == 5

    def test_total_identity(self, rng):
        for _ in range(20):
            n = rng.integers(0, 6, size=3)
            seq = assemble(np.zeros((n[0], 2)), np.zeros((n[1], 2)), np.zeros((n[2], 2)))
            budget = token_budget(seq)
            assert budget.total == budget.n_pixel + budget.n_semantic + budget.n_text
            assert budget.total == len(seq)
