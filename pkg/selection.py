"""
Cluster quality 점수화와 top-K semantic token 선택 모듈

    s_j = η1·S_size + η2·S_coh − η3·S_disp

- S_size: |members| / N
- S_coh:  1 − (member feature 와 cluster 평균 사이 cosine distance 의 평균),
          [0,1] 로 clamp. 평균 feature 가 0 이면 유사도를 0 으로 본다.
- S_disp: member 좌표의 RMS 거리(공간 평균 기준) / √2

선택된 cluster 는 saliency 가중 feature 평균으로 semantic token 이 된다.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from clustering import Clustering
from errors import InvalidTopK, ZeroVector

logger = logging.getLogger(__name__)

DEFAULT_ETAS: tuple[float, float, float] = (1.0, 1.0, 1.0)
K_RULE_HALF_BETA = "half_beta"


@dataclass(frozen=True)
class ClusterScore:
    size_score: float
    coherence_score: float
    dispersion_score: float
    composite: float

    def to_dict(self) -> dict:
        return {
            "size": self.size_score,
            "coherence": self.coherence_score,
            "dispersion": self.dispersion_score,
            "composite": self.composite,
        }


@dataclass(frozen=True)
class SemanticTokenSet:
    tokens: np.ndarray
    source_clusters: tuple[int, ...]
    scores: tuple[ClusterScore, ...]

    def __len__(self) -> int:
        return len(self.source_clusters)


# ---------------------------------------------------------------------------
# Per-cluster scores
# ---------------------------------------------------------------------------
def score_size(members, n_total: int) -> float:
    return len(members) / n_total


def score_coherence(member_features: np.ndarray) -> float:
    """1 − (member 와 feature 평균 사이 cosine 거리의 평균)."""
    feats = np.asarray(member_features, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[None, :]
    norms = np.linalg.norm(feats, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVector("cluster member has a zero-norm feature")
    if feats.shape[0] == 1:
        return 1.0
    mean = feats.mean(axis=0)
    mean_norm = float(np.linalg.norm(mean))
    if mean_norm == 0.0:
        cos = np.zeros(feats.shape[0])
    else:
        cos = (feats @ mean) / (norms * mean_norm)
    distance = 1.0 - cos
    return float(np.clip(1.0 - distance.mean(), 0.0, 1.0))


def score_dispersion(member_coords: np.ndarray) -> float:
    coords = np.asarray(member_coords, dtype=np.float64).reshape(-1, 2)
    if coords.shape[0] <= 1:
        return 0.0
    centered = coords - coords.mean(axis=0)
    rms = math.sqrt(float(np.mean(np.sum(centered**2, axis=1))))
    return rms / math.sqrt(2.0)


def composite_score(
    size: float,
    coherence: float,
    dispersion: float,
    etas: tuple[float, float, float] = DEFAULT_ETAS,
) -> float:
    eta1, eta2, eta3 = etas
    return eta1 * size + eta2 * coherence - eta3 * dispersion


def score_clusters(
    clustering: Clustering,
    features: np.ndarray,
    coords: np.ndarray,
    etas: tuple[float, float, float] = DEFAULT_ETAS,
) -> list[ClusterScore]:
    """모든 cluster 점수 계산. features (N, C), coords (N, 2) 는 row-major."""
    n_total = len(clustering.assignments)
    scores = []
    for j in range(clustering.n_clusters):
        members = clustering.members(j)
        size = score_size(members, n_total)
        coh = score_coherence(features[members])
        disp = score_dispersion(coords[members])
        scores.append(
            ClusterScore(size, coh, disp, composite_score(size, coh, disp, etas))
        )
    return scores


# ---------------------------------------------------------------------------
# Top-K
# ---------------------------------------------------------------------------
def select_topk(scores, k: int) -> list[int]:
    """점수 상위 k 개 index (내림차순, 동률은 index 오름차순)."""
    if k < 1:
        raise InvalidTopK(f"K must be >= 1, got {k}")
    values = [float(s) for s in scores]
    order = sorted(range(len(values)), key=lambda j: (-values[j], j))
    return order[:k]


def parse_k_rule(rule: str) -> tuple[str, int | None]:
    if rule == K_RULE_HALF_BETA:
        return rule, None
    if rule.startswith("fixed:"):
        try:
            k = int(rule.split(":", 1)[1])
        except ValueError:
            raise InvalidTopK(f"bad K rule {rule!r}") from None
        if k < 1:
            raise InvalidTopK(f"fixed K must be >= 1, got {k}")
        return "fixed", k
    raise InvalidTopK(f"unknown K rule {rule!r}; use half_beta or fixed:<k>")


def resolve_k(rule: str, beta: int, n_clusters: int) -> int:
    """rule 로 K 결정: half_beta 면 ceil(beta / 2), 최대 M."""
    kind, fixed = parse_k_rule(rule)
    k = math.ceil(beta / 2) if kind == K_RULE_HALF_BETA else fixed
    return min(k, n_clusters)


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------
def emit_semantic_tokens(
    clustering: Clustering,
    selected: list[int],
    features: np.ndarray,
    saliencies: np.ndarray,
    scores: list[ClusterScore] | None = None,
) -> SemanticTokenSet:
    feats = np.asarray(features, dtype=np.float64)
    sal = np.asarray(saliencies, dtype=np.float64)
    tokens = []
    for j in selected:
        members = clustering.members(j)
        weights = sal[members]
        total = weights.sum()
        if total > 0:
            token = (weights / total) @ feats[members]
        else:
            token = feats[members].mean(axis=0)
        tokens.append(token)
    width = feats.shape[1]
    stacked = np.stack(tokens) if tokens else np.empty((0, width))
    picked = tuple(scores[j] for j in selected) if scores is not None else ()
    logger.debug("[Select] emitted %d semantic tokens", len(selected))
    return SemanticTokenSet(
        tokens=stacked, source_clusters=tuple(int(j) for j in selected), scores=picked
    )
