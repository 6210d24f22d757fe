"""
scenes.py 단위 테스트
planted-blob scene 생성기와 분류용 scene 묶음
"""

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from clustering import cluster
from errors import DimensionMismatch
from scenes import generate_scene, make_labeled_scenes


class TestGenerateScene:
    def test_single_blob(self):
        scene = generate_scene(1, 8, 4, seed=3)
        assert np.all(scene.planted == 0)
        assert scene.n_blobs == 1

    def test_deterministic_bytes(self):
        a = generate_scene(3, 16, 8, seed=9)
        b = generate_scene(3, 16, 8, seed=9)
        assert a.features.data.tobytes() == b.features.data.tobytes()
        assert a.saliency.data.tobytes() == b.saliency.data.tobytes()
        np.testing.assert_array_equal(a.planted, b.planted)

    def test_seed_matters(self):
        a = generate_scene(3, 16, 8, seed=1)
        b = generate_scene(3, 16, 8, seed=2)
        assert not np.array_equal(a.features.data, b.features.data)

    def test_shapes_and_saliency(self, planted_scene):
        assert planted_scene.features.data.shape == (16, 16, 8)
        assert planted_scene.planted.shape == (16, 16)
        assert abs(planted_scene.saliency.data.sum() - 1.0) <= 1e-9
        assert np.all(planted_scene.saliency.data > 0)
        assert set(np.unique(planted_scene.planted)) == {0, 1, 2}

    def test_signature_separation(self):
        scene = generate_scene(4, 16, 8, separation=10.0, spread=0.5, seed=0)
        sig = scene.signatures
        dist = np.linalg.norm(sig[:, None] - sig[None, :], axis=2)
        closest = dist[np.triu_indices(4, k=1)].min()
        assert closest == pytest.approx(5.0)

    def test_recovered_by_clustering(self, planted_scene):
        result = cluster(planted_scene.features, planted_scene.saliency, 3)
        assert adjusted_rand_score(
            planted_scene.planted.ravel(), result.assignments
        ) == pytest.approx(1.0)

    @pytest.mark.parametrize("args", [(0, 4, 2), (17, 4, 2), (2, 4, 0)])
    def test_bad_arguments(self, args):
        with pytest.raises(DimensionMismatch):
            generate_scene(*args)


class TestLabeledScenes:
    def test_classes_alternate(self):
        scenes = make_labeled_scenes(6, 8, 4, seed=0)
        assert [s.label for s in scenes] == [0, 1, 0, 1, 0, 1]

    def test_deterministic(self):
        a = make_labeled_scenes(4, 8, 4, seed=5)
        b = make_labeled_scenes(4, 8, 4, seed=5)
        for sa, sb in zip(a, b, strict=True):
            np.testing.assert_array_equal(sa.features.data, sb.features.data)

    def test_class_means_separated(self):
        scenes = make_labeled_scenes(20, 8, 4, seed=1, offset=1.0)
        means = np.array([s.features.tokens().mean(axis=0) for s in scenes])
        labels = np.array([s.label for s in scenes])
        gap = np.linalg.norm(means[labels == 1].mean(axis=0) - means[labels == 0].mean(axis=0))
        assert gap > 0.5
