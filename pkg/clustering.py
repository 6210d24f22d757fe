"""
Relation-aware mini-k-means 모듈

pooled token 을 attention 공간 a_i = [x, y, w_s·saliency] 와 feature 공간에서
동시에 묶는다. 비용은

    ‖a_i − c_a‖² + λ_f · ‖f_i − c_f‖²

이고 (δ 는 cluster feature 평균까지의 제곱 유클리드 거리), full-batch Lloyd
반복으로 최소화한다.

Design notes:
- 초기화는 joint 비용 기반 greedy k-means++ 이다. 첫 seed 는 saliency 가중,
  이후에는 가장 가까운 seed 까지의 비용에 비례해 후보 2 + ⌊ln M⌋ 개를 뽑고
  전체 비용 합을 가장 많이 줄이는 후보를 고른다.
- 빈 cluster 는 현재 worst-fit token(최소비용이 가장 큰 token)으로 reseed
  한다. M 이 고정되어야 하므로 cluster 수를 줄이지 않는다.
- tie-break 는 어디서나 가장 낮은 index.
- RNG 는 명시적 seed 에서만 만든다: 같은 (입력, seed) 면 bit 단위로 같다.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from errors import DimensionMismatch, InvalidConfig, TooManyClusters
from tensors import FeatureMap, SaliencyMap, grid_coords

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA_F = 0.5
DEFAULT_MAX_ITER = 50
DEFAULT_TOL = 1e-7


@dataclass(frozen=True)
class TokenDescriptor:
    coord: tuple[float, float]
    saliency: float
    feature: np.ndarray


@dataclass
class Centroid:
    a_center: np.ndarray
    f_center: np.ndarray
    members: tuple[int, ...] = ()


@dataclass
class Clustering:
    centroids: list[Centroid]
    assignments: np.ndarray
    objective_trace: list[float]
    seed: int
    lambda_f: float
    n_iter: int = 0
    restart: int = 0
    restart_objectives: list[float] = field(default_factory=list)

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1]

    @property
    def n_clusters(self) -> int:
        return len(self.centroids)

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == j)


# ---------------------------------------------------------------------------
# Descriptors
# ---------------------------------------------------------------------------
def make_descriptors(
    features: FeatureMap, saliency: SaliencyMap
) -> list[TokenDescriptor]:
    if features.side != saliency.side:
        raise DimensionMismatch(
            f"feature side {features.side} != saliency side {saliency.side}",
            module="clustering",
        )
    coords = grid_coords(features.side)
    tokens = features.tokens()
    values = saliency.values()
    return [
        TokenDescriptor(
            coord=(float(coords[i, 0]), float(coords[i, 1])),
            saliency=float(values[i]),
            feature=tokens[i],
        )
        for i in range(tokens.shape[0])
    ]


def attention_space(
    descriptors: list[TokenDescriptor], saliency_weight: float = 1.0
) -> np.ndarray:
    """[x, y, w_s·saliency] 로 이루어진 (N, 3) 행렬."""
    return np.array(
        [[d.coord[0], d.coord[1], saliency_weight * d.saliency] for d in descriptors],
        dtype=np.float64,
    )


def feature_space(descriptors: list[TokenDescriptor]) -> np.ndarray:
    return np.stack([np.asarray(d.feature, dtype=np.float64) for d in descriptors])


def pair_cost(
    token: TokenDescriptor,
    centroid: Centroid,
    lambda_f: float,
    saliency_weight: float = 1.0,
) -> float:
    a = np.array(
        [token.coord[0], token.coord[1], saliency_weight * token.saliency],
        dtype=np.float64,
    )
    a_dist = float(np.sum((a - centroid.a_center) ** 2))
    f_dist = float(np.sum((np.asarray(token.feature) - centroid.f_center) ** 2))
    return a_dist + lambda_f * f_dist


def _cost_matrix(
    a: np.ndarray,
    f: np.ndarray,
    a_centers: np.ndarray,
    f_centers: np.ndarray,
    lambda_f: float,
) -> np.ndarray:
    a_d = np.sum((a[:, None, :] - a_centers[None, :, :]) ** 2, axis=2)
    f_d = np.sum((f[:, None, :] - f_centers[None, :, :]) ** 2, axis=2)
    return a_d + lambda_f * f_d


def _stack_centroids(centroids: list[Centroid]) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.stack([c.a_center for c in centroids]),
        np.stack([c.f_center for c in centroids]),
    )


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------
def init_centroids(
    descriptors: list[TokenDescriptor],
    n_clusters: int,
    rng_seed: int,
    lambda_f: float = DEFAULT_LAMBDA_F,
    saliency_weight: float = 1.0,
) -> list[Centroid]:
    """joint cost 기준 greedy k-means++ 초기화.

    첫 seed 는 saliency 비례로 뽑는다 (saliency 가 전부 0 이면 균등).
    이후 단계마다 가장 가까운 seed 까지의 cost 에 비례해 후보 n_candidates 개를
    뽑고, 추가했을 때 nearest cost 합이 가장 작은 후보를 고른다 (동률이면 앞 후보).
    남은 cost 가 모두 0 이면 (중복 token) 아직 안 뽑힌 token 중 균등하게 고른다.
    """
    n = len(descriptors)
    if n_clusters < 1:
        raise TooManyClusters(f"cluster count must be >= 1, got {n_clusters}")
    if n_clusters > n:
        raise TooManyClusters(
            f"{n_clusters} clusters requested but only {n} tokens available"
        )
    n_candidates = 2 + int(np.log(n_clusters))
    rng = np.random.default_rng(rng_seed)
    a = attention_space(descriptors, saliency_weight)
    f = feature_space(descriptors)

    sal = np.array([d.saliency for d in descriptors], dtype=np.float64)
    if sal.sum() > 0:
        first = int(rng.choice(n, p=sal / sal.sum()))
    else:
        first = int(rng.integers(n))
    chosen = [first]
    nearest = _cost_matrix(a, f, a[[first]], f[[first]], lambda_f)[:, 0]

    while len(chosen) < n_clusters:
        weights = nearest.copy()
        weights[chosen] = 0.0
        total = weights.sum()
        if total > 0:
            candidates = rng.choice(n, size=n_candidates, p=weights / total)
            costs = _cost_matrix(a, f, a[candidates], f[candidates], lambda_f)
            potential = np.minimum(nearest[:, None], costs).sum(axis=0)
            nxt = int(candidates[int(np.argmin(potential))])
        else:
            remaining = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(remaining))
        chosen.append(nxt)
        cost_new = _cost_matrix(a, f, a[[nxt]], f[[nxt]], lambda_f)[:, 0]
        nearest = np.minimum(nearest, cost_new)

    return [Centroid(a_center=a[i].copy(), f_center=f[i].copy()) for i in chosen]


# ---------------------------------------------------------------------------
# Lloyd iteration
# ---------------------------------------------------------------------------
def _lloyd_arrays(
    a: np.ndarray,
    f: np.ndarray,
    a_centers: np.ndarray,
    f_centers: np.ndarray,
    lambda_f: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    n_clusters = a_centers.shape[0]
    costs = _cost_matrix(a, f, a_centers, f_centers, lambda_f)
    # np.argmin returns the first minimum → lowest index wins ties
    assignments = np.argmin(costs, axis=1)
    min_costs = costs[np.arange(costs.shape[0]), assignments]
    objective = float(min_costs.sum())

    counts = np.bincount(assignments, minlength=n_clusters)
    for j in np.flatnonzero(counts == 0):
        # worst-fit token from a cluster that can spare one member
        donors = counts[assignments] >= 2
        candidates = np.where(donors, min_costs, -np.inf)
        worst = int(np.argmax(candidates))
        counts[assignments[worst]] -= 1
        assignments[worst] = j
        counts[j] = 1
        min_costs[worst] = 0.0
        logger.debug("[Cluster] reseeded empty cluster %d with token %d", j, worst)

    new_a = np.empty_like(a_centers)
    new_f = np.empty_like(f_centers)
    for j in range(n_clusters):
        mask = assignments == j
        new_a[j] = a[mask].mean(axis=0)
        new_f[j] = f[mask].mean(axis=0)
    return assignments, new_a, new_f, objective


def _centroids_from(
    assignments: np.ndarray, a_centers: np.ndarray, f_centers: np.ndarray
) -> list[Centroid]:
    return [
        Centroid(
            a_center=a_centers[j].copy(),
            f_center=f_centers[j].copy(),
            members=tuple(int(i) for i in np.flatnonzero(assignments == j)),
        )
        for j in range(a_centers.shape[0])
    ]


def lloyd_step(
    descriptors: list[TokenDescriptor],
    centroids: list[Centroid],
    lambda_f: float = DEFAULT_LAMBDA_F,
    saliency_weight: float = 1.0,
) -> tuple[np.ndarray, list[Centroid], float]:
    """assignment + update 한 번.

    (assignments, 새 centroids, objective) 반환. objective 는 입력 centroid
    기준 Σ_i min_j cost.
    """
    if not centroids:
        raise TooManyClusters("lloyd_step needs at least one centroid")
    a = attention_space(descriptors, saliency_weight)
    f = feature_space(descriptors)
    a_c, f_c = _stack_centroids(centroids)
    assignments, new_a, new_f, objective = _lloyd_arrays(a, f, a_c, f_c, lambda_f)
    return assignments, _centroids_from(assignments, new_a, new_f), objective


def joint_objective(
    descriptors: list[TokenDescriptor],
    assignments: np.ndarray,
    centroids: list[Centroid],
    lambda_f: float,
    saliency_weight: float = 1.0,
) -> float:
    a = attention_space(descriptors, saliency_weight)
    f = feature_space(descriptors)
    a_c, f_c = _stack_centroids(centroids)
    a_d = np.sum((a - a_c[assignments]) ** 2, axis=1)
    f_d = np.sum((f - f_c[assignments]) ** 2, axis=1)
    return float(np.sum(a_d + lambda_f * f_d))


def run_lloyd(
    descriptors: list[TokenDescriptor],
    centroids: list[Centroid],
    lambda_f: float = DEFAULT_LAMBDA_F,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    saliency_weight: float = 1.0,
) -> tuple[np.ndarray, list[Centroid], list[float], int]:
    """주어진 centroid 에서 Lloyd step 반복.

    |Δobjective| <= tol 이거나 max_iter 에 닿으면 멈춘다. trace 마지막 값은
    최종 assignment 를 자기 평균에 대해 잰 objective.
    """
    a = attention_space(descriptors, saliency_weight)
    f = feature_space(descriptors)
    a_c, f_c = _stack_centroids(centroids)
    trace: list[float] = []
    assignments = np.zeros(len(descriptors), dtype=np.int64)
    n_iter = 0
    for _ in range(max_iter):
        assignments, a_c, f_c, objective = _lloyd_arrays(a, f, a_c, f_c, lambda_f)
        trace.append(objective)
        n_iter += 1
        if len(trace) > 1 and abs(trace[-2] - trace[-1]) <= tol:
            break
    final = float(
        np.sum(
            np.sum((a - a_c[assignments]) ** 2, axis=1)
            + lambda_f * np.sum((f - f_c[assignments]) ** 2, axis=1)
        )
    )
    trace.append(final)
    return assignments, _centroids_from(assignments, a_c, f_c), trace, n_iter


def restart_seed(seed: int, restart: int) -> int:
    if restart == 0:
        return seed
    return int(np.random.SeedSequence([seed, restart]).generate_state(1)[0])


def cluster_descriptors(
    descriptors: list[TokenDescriptor],
    n_clusters: int,
    lambda_f: float = DEFAULT_LAMBDA_F,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    restarts: int = 1,
    saliency_weight: float = 1.0,
) -> Clustering:
    if max_iter < 1 or tol < 0:
        raise InvalidConfig(
            f"need max_iter >= 1 and tol >= 0, got {max_iter}, {tol}",
            module="clustering",
        )
    best: Clustering | None = None
    finals: list[float] = []
    for r in range(max(1, restarts)):
        init = init_centroids(
            descriptors,
            n_clusters,
            restart_seed(seed, r),
            lambda_f=lambda_f,
            saliency_weight=saliency_weight,
        )
        assignments, centroids, trace, n_iter = run_lloyd(
            descriptors,
            init,
            lambda_f=lambda_f,
            max_iter=max_iter,
            tol=tol,
            saliency_weight=saliency_weight,
        )
        finals.append(trace[-1])
        logger.info(
            "[Cluster] restart=%d iters=%d objective=%.6g", r, n_iter, trace[-1]
        )
        if best is None or trace[-1] < best.final_objective:
            best = Clustering(
                centroids=centroids,
                assignments=assignments,
                objective_trace=trace,
                seed=seed,
                lambda_f=lambda_f,
                n_iter=n_iter,
                restart=r,
            )
    best.restart_objectives = finals
    return best


def cluster(
    features: FeatureMap,
    saliency: SaliencyMap,
    n_clusters: int,
    lambda_f: float = DEFAULT_LAMBDA_F,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    restarts: int = 1,
    saliency_weight: float = 1.0,
) -> Clustering:
    """pooled grid 를 n_clusters 개 centroid 후보로 clustering."""
    descriptors = make_descriptors(features, saliency)
    return cluster_descriptors(
        descriptors,
        n_clusters,
        lambda_f=lambda_f,
        seed=seed,
        max_iter=max_iter,
        tol=tol,
        restarts=restarts,
        saliency_weight=saliency_weight,
    )
