"""
Granularity-guided pooling 모듈

F_α = Kᵀ·F·K, A_α = Kᵀ·A·K 를 블록 평균 커널로 구현한다.

- alpha=1 이면 K 는 단위행렬이다 (fine 설정 = 입력 그대로).
- alpha 가 side 를 나누지 않으면 padding 없이 ``NonDivisible`` 로 거절한다.
  경계 saliency 가 왜곡되지 않도록 호출자가 호환되는 프로파일을 골라야 한다.
- 커널 열은 합이 1 (평균 pooling) 이므로 상수 map 은 고정점이다. sum
  pooling 이었다면 feature 가 α² 배 커진다.
- saliency 는 pooling 후 다시 단위 질량으로 정규화한다.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from errors import DimensionMismatch, NonDivisible
from tensors import FeatureMap, SaliencyMap, normalize_saliency

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PoolKernel:
    """block 평균 kernel K (side_in × side_out)."""

    side_in: int
    side_out: int
    alpha: int
    matrix: np.ndarray


def build_kernel(side_in: int, alpha: int) -> PoolKernel:
    if alpha < 1:
        raise NonDivisible(f"alpha must be >= 1, got {alpha}")
    if side_in < 1 or side_in % alpha != 0:
        raise NonDivisible(f"alpha={alpha} does not divide grid side {side_in}")
    side_out = side_in // alpha
    matrix = np.zeros((side_in, side_out), dtype=np.float64)
    for j in range(side_out):
        matrix[j * alpha : (j + 1) * alpha, j] = 1.0 / alpha
    matrix.setflags(write=False)
    return PoolKernel(side_in=side_in, side_out=side_out, alpha=alpha, matrix=matrix)


def _check_side(side: int, kernel: PoolKernel, what: str) -> None:
    if side != kernel.side_in:
        raise DimensionMismatch(
            f"{what} side {side} does not match kernel side_in {kernel.side_in}",
            module="pooling",
        )


def pool_grid(grid: np.ndarray, kernel: PoolKernel) -> np.ndarray:
    """Kᵀ·G·K for a single 2-D grid."""
    k = kernel.matrix
    return k.T @ grid @ k


def pool_features(fmap: FeatureMap, kernel: PoolKernel) -> FeatureMap:
    _check_side(fmap.side, kernel, "feature map")
    k = kernel.matrix
    # Each channel independently: out[:, :, c] = Kᵀ · F[:, :, c] · K
    pooled = np.einsum("ip,ijc,jq->pqc", k, fmap.data, k)
    return FeatureMap(pooled)


def pool_saliency(saliency: SaliencyMap, kernel: PoolKernel) -> SaliencyMap:
    _check_side(saliency.side, kernel, "saliency map")
    if kernel.alpha == 1:
        return saliency
    return normalize_saliency(pool_grid(saliency.data, kernel))


def pool_labels(labels: np.ndarray, alpha: int) -> np.ndarray:
    """정수 label grid 의 block 다수결 pooling (동률이면 작은 label)."""
    labels = np.asarray(labels)
    side = labels.shape[0]
    if side % alpha != 0:
        raise NonDivisible(f"alpha={alpha} does not divide grid side {side}")
    if alpha == 1:
        return labels.copy()
    side_out = side // alpha
    out = np.empty((side_out, side_out), dtype=np.int64)
    for r in range(side_out):
        for c in range(side_out):
            block = labels[r * alpha : (r + 1) * alpha, c * alpha : (c + 1) * alpha]
            out[r, c] = int(np.argmax(np.bincount(block.ravel())))
    return out
