"""
Planted-blob 합성 scene 생성 모듈

clustering/selection 복원 테스트와 sweep, head 학습의 입력 데이터.

- blob 중심은 서로 다른 grid 셀(비복원 추출), 각 위치의 planted label 은
  가장 가까운 중심(동률이면 낮은 index).
- feature = signature[label] + N(0, spread²/C) 잡음. signature 는 최소
  pairwise 거리가 separation × spread 가 되도록 스케일한다.
- saliency = 중심별 isotropic Gaussian(σ=0.15) 합 + 1e-3 floor, 정규화.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from errors import DimensionMismatch
from tensors import FeatureMap, SaliencyMap, grid_coords, normalize_saliency

logger = logging.getLogger(__name__)

DEFAULT_SEPARATION = 10.0
DEFAULT_SPREAD = 1.0
SALIENCY_SIGMA = 0.15
SALIENCY_FLOOR = 1e-3


@dataclass(frozen=True)
class SyntheticScene:
    features: FeatureMap
    saliency: SaliencyMap
    planted: np.ndarray  # (side, side) int labels
    centers: np.ndarray  # (G, 2) normalized coords
    signatures: np.ndarray  # (G, C)
    label: int = 0
    seed: int = 0

    @property
    def n_blobs(self) -> int:
        return self.signatures.shape[0]


def _scaled_signatures(
    rng: np.random.Generator, n_blobs: int, channels: int, min_distance: float
) -> np.ndarray:
    signatures = rng.standard_normal((n_blobs, channels))
    if n_blobs == 1:
        return signatures
    diffs = signatures[:, None, :] - signatures[None, :, :]
    dist = np.sqrt(np.sum(diffs**2, axis=2))
    closest = float(dist[np.triu_indices(n_blobs, k=1)].min())
    if closest == 0.0:
        raise DimensionMismatch("degenerate blob signatures", module="harness")
    return signatures * (min_distance / closest)


def generate_scene(
    n_blobs: int,
    side: int,
    channels: int,
    separation: float = DEFAULT_SEPARATION,
    seed: int = 0,
    spread: float = DEFAULT_SPREAD,
    label: int = 0,
) -> SyntheticScene:
    if n_blobs < 1 or side < 1 or channels < 1:
        raise DimensionMismatch(
            f"G, side and C must be positive (got {n_blobs}, {side}, {channels})",
            module="harness",
        )
    if n_blobs > side * side:
        raise DimensionMismatch(
            f"{n_blobs} blobs do not fit on a {side}x{side} grid", module="harness"
        )
    rng = np.random.default_rng(seed)
    coords = grid_coords(side)
    center_cells = rng.choice(side * side, size=n_blobs, replace=False)
    centers = coords[center_cells]

    sq_dist = np.sum((coords[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    planted = np.argmin(sq_dist, axis=1)

    signatures = _scaled_signatures(rng, n_blobs, channels, separation * spread)
    noise = rng.normal(0.0, spread / np.sqrt(channels), size=(side * side, channels))
    features = (signatures[planted] + noise).reshape(side, side, channels)

    bumps = np.exp(-sq_dist / (2.0 * SALIENCY_SIGMA**2)).sum(axis=1)
    saliency = normalize_saliency((bumps + SALIENCY_FLOOR).reshape(side, side))

    logger.debug("[Scene] G=%d side=%d C=%d seed=%d", n_blobs, side, channels, seed)
    return SyntheticScene(
        features=FeatureMap(features),
        saliency=saliency,
        planted=planted.reshape(side, side),
        centers=centers,
        signatures=signatures,
        label=label,
        seed=seed,
    )


def class_direction(channels: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, channels])
    direction = rng.standard_normal(channels)
    return direction / np.linalg.norm(direction)


def make_labeled_scenes(
    n_scenes: int,
    side: int,
    channels: int,
    seed: int = 0,
    n_classes: int = 2,
    n_blobs: int = 3,
    offset: float = 1.0,
    spread: float = 0.05,
) -> list[SyntheticScene]:
    """Linearly separable scene set: class c shifts every feature along one
    fixed direction by (c − (n_classes − 1)/2) · offset.
    """
    direction = class_direction(channels, seed)
    children = np.random.SeedSequence(seed).spawn(n_scenes)
    scenes = []
    for i, child in enumerate(children):
        cls = i % n_classes
        scene_seed = int(child.generate_state(1)[0])
        base = generate_scene(
            n_blobs, side, channels, DEFAULT_SEPARATION, scene_seed, spread, label=cls
        )
        shift = (cls - (n_classes - 1) / 2.0) * offset * direction
        scenes.append(
            SyntheticScene(
                features=FeatureMap(base.features.data + shift),
                saliency=base.saliency,
                planted=base.planted,
                centers=base.centers,
                signatures=base.signatures,
                label=cls,
                seed=scene_seed,
            )
        )
    return scenes
