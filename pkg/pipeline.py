"""
End-to-end 파이프라인 (controller → pooling → clustering → selection → fusion)

- ``run_pipeline``: 한 장의 feature grid + saliency + 질문으로 F_mix 와
  JSON report 를 만든다. fixed profile 이 주어지면 controller 를 건너뛴다.
- ``sweep``: (alpha, beta) 격자 × planted scene 에 대해 복원 ARI, coherence,
  token budget 을 표로 모은다. cell 마다 독립 seed.
- ``train_on_scenes``: scene 들을 stop-gradient 전처리한 뒤 objective head 학습.

report / sweep 표에는 wall-clock 시간을 넣지 않는다 (같은 seed → 같은 bytes).
시간은 ``timings`` 로 따로 돌려주고 CLI 가 ``<out>.timings.json`` 에 쓴다.
"""

from __future__ import annotations

import logging
import math
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.metrics import adjusted_rand_score

import controller as ctl
from clustering import Clustering, cluster
from config import PipelineConfig
from corpus import tokenize_question
from errors import InvalidConfig, TooManyClusters
from fusion import (
    ProjectorBank,
    TokenBudget,
    assemble,
    make_projector_bank,
    project,
    token_budget,
)
from objective import (
    HeadHyper,
    HeadSample,
    HeadTrainResult,
    lift_descriptor,
    train_heads,
)
from pooling import build_kernel, pool_features, pool_labels, pool_saliency
from scenes import SyntheticScene
from selection import (
    ClusterScore,
    SemanticTokenSet,
    emit_semantic_tokens,
    resolve_k,
    score_clusters,
    select_topk,
)
from tensors import (
    FeatureMap,
    GranularityProfile,
    SaliencyMap,
    TokenSequence,
    grid_coords,
)

logger = logging.getLogger(__name__)

SOURCE_CONTROLLER = "controller"
SOURCE_FIXED = "fixed"
SWEEP_QUESTION = "what is in this image"
BETA_ALL = "N"


@dataclass
class Aggregation:
    """grid 하나의 pooling → clustering → selection 결과."""

    pooled_features: FeatureMap
    pooled_saliency: SaliencyMap
    clustering: Clustering | None = None
    scores: list[ClusterScore] = field(default_factory=list)
    selected: list[int] = field(default_factory=list)
    semantic: SemanticTokenSet | None = None
    k: int = 0

    @property
    def semantic_tokens(self) -> np.ndarray:
        if self.semantic is None:
            return np.empty((0, self.pooled_features.channels))
        return self.semantic.tokens


@dataclass
class PipelineResult:
    report: dict
    sequence: TokenSequence
    aggregation: Aggregation
    budget: TokenBudget
    timings: dict[str, float] = field(default_factory=dict)


class _Stopwatch:
    def __init__(self) -> None:
        self.timings: dict[str, float] = {}

    def lap(self, name: str, start: float) -> float:
        now = time.perf_counter()
        self.timings[name] = now - start
        return now


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------
def aggregate_tokens(
    config: PipelineConfig,
    features: FeatureMap,
    saliency: SaliencyMap,
    profile: GranularityProfile,
    include_semantic: bool = True,
    n_clusters: int | None = None,
) -> Aggregation:
    """alpha 로 pooling, beta (또는 n_clusters) 개로 clustering, 점수 계산 후 선택."""
    kernel = build_kernel(features.side, profile.alpha)
    pooled_f = pool_features(features, kernel)
    pooled_a = pool_saliency(saliency, kernel)
    result = Aggregation(pooled_features=pooled_f, pooled_saliency=pooled_a)
    if not include_semantic:
        return result

    m = profile.beta if n_clusters is None else n_clusters
    n_tokens = pooled_f.side * pooled_f.side
    if m > n_tokens:
        raise TooManyClusters(
            f"beta={m} exceeds the {n_tokens} tokens left after alpha={profile.alpha} pooling"
        )
    clustering = cluster(
        pooled_f,
        pooled_a,
        m,
        lambda_f=config.lambda_f,
        seed=config.seed,
        max_iter=config.max_iter,
        tol=config.tol,
        restarts=config.restarts,
        saliency_weight=config.saliency_weight,
    )
    feats = pooled_f.tokens()
    scores = score_clusters(clustering, feats, grid_coords(pooled_f.side), config.etas)
    k = resolve_k(config.k_rule, profile.beta, clustering.n_clusters)
    selected = select_topk([s.composite for s in scores], k)
    semantic = emit_semantic_tokens(
        clustering, selected, feats, pooled_a.values(), scores
    )
    logger.info(
        "[Pipeline] alpha=%d M=%d K=%d final objective=%.6g",
        profile.alpha,
        m,
        k,
        clustering.final_objective,
    )
    result.clustering = clustering
    result.scores = scores
    result.selected = selected
    result.semantic = semantic
    result.k = k
    return result


def projector_bank_for(config: PipelineConfig) -> ProjectorBank:
    return make_projector_bank(
        len(config.profiles), config.feature_dim, config.token_dim, config.seed
    )


def controller_for(config: PipelineConfig) -> ctl.ControllerParams:
    return ctl.trained_controller(
        profiles=tuple(config.profiles),
        text_dim=config.text_dim,
        descriptor_dim=config.descriptor_dim,
        hidden_dim=config.hidden_dim,
        items_per_class=config.items_per_class,
        seed=config.seed,
        lr=config.controller_lr,
        epochs=config.controller_epochs,
    )


def fuse(
    config: PipelineConfig,
    features: FeatureMap,
    aggregation: Aggregation,
    text_vectors: np.ndarray,
    gamma: int,
    bank: ProjectorBank | None = None,
) -> TokenSequence:
    if bank is None:
        bank = projector_bank_for(config)
    pixel_source = aggregation.pooled_features if config.pool_pixel_stream else features
    pixel = project(pixel_source.tokens(), bank, gamma)
    semantic = project(aggregation.semantic_tokens, bank, gamma)
    return assemble(pixel, semantic, text_vectors)


# ---------------------------------------------------------------------------
# run_pipeline
# ---------------------------------------------------------------------------
def run_pipeline(
    config: PipelineConfig,
    features: FeatureMap,
    saliency: SaliencyMap,
    question_tokens=None,
    controller_params: ctl.ControllerParams | None = None,
    text_embedding: ctl.TextEmbedding | None = None,
    fixed_profile: GranularityProfile | None = None,
    include_semantic: bool | None = None,
    bank: ProjectorBank | None = None,
) -> PipelineResult:
    watch = _Stopwatch()
    start = time.perf_counter()
    if include_semantic is None:
        include_semantic = config.include_semantic

    report: dict = {"config": config.to_dict()}
    if fixed_profile is None:
        params = controller_params
        if params is None:
            params = controller_for(config)
        dist, _ = ctl.predict_question(question_tokens, params, text_embedding)
        profile = ctl.select(dist)
        embedding = text_embedding
        if embedding is None:
            embedding = ctl.encode_text_surrogate(
                question_tokens, params.text_dim, params.embed_seed
            )
        report["profile_source"] = SOURCE_CONTROLLER
        report["profile_index"] = ctl.select_index(dist)
        report["distribution"] = dist.to_dict()
        report["expected_profile"] = [float(x) for x in ctl.expected_profile(dist)]
    else:
        profile = fixed_profile
        embedding = text_embedding
        if embedding is None:
            embedding = ctl.encode_text_surrogate(question_tokens, config.text_dim, 0)
        report["profile_source"] = SOURCE_FIXED
    report["selected_profile"] = profile.to_dict()
    start = watch.lap("controller", start)

    aggregation = aggregate_tokens(config, features, saliency, profile, include_semantic)
    start = watch.lap("aggregation", start)

    sequence = fuse(config, features, aggregation, embedding.vectors, profile.gamma, bank)
    budget = token_budget(sequence)
    watch.lap("fusion", start)

    report["semantic_included"] = bool(include_semantic)
    report["pooled_side"] = aggregation.pooled_features.side
    if aggregation.clustering is not None:
        clus = aggregation.clustering
        report["cluster"] = {
            "n_clusters": clus.n_clusters,
            "objective_trace": [float(x) for x in clus.objective_trace],
            "final_objective": float(clus.final_objective),
            "n_iter": clus.n_iter,
            "restart": clus.restart,
            "sizes": [int(len(clus.members(j))) for j in range(clus.n_clusters)],
        }
        report["k"] = aggregation.k
        report["selected_clusters"] = list(aggregation.selected)
        report["scores"] = [
            {"cluster": j, **s.to_dict()} for j, s in enumerate(aggregation.scores)
        ]
    report["token_budget"] = budget.to_dict()
    watch.timings["total"] = sum(watch.timings.values())
    return PipelineResult(
        report=report,
        sequence=sequence,
        aggregation=aggregation,
        budget=budget,
        timings=watch.timings,
    )


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------
def cell_seed(base_seed: int, index: int) -> int:
    return int(base_seed) ^ zlib.crc32(str(index).encode("ascii"))


def parse_beta(value, n_tokens: int) -> int:
    if isinstance(value, str) and value.strip().upper() == BETA_ALL:
        return n_tokens
    beta = int(value)
    if beta < 1:
        raise InvalidConfig(f"beta must be >= 1 or 'N', got {value!r}")
    return beta


def _run_cell(
    config: PipelineConfig,
    index: int,
    alpha: int,
    beta_label,
    scenes: list[SyntheticScene],
    question: list[int],
    include_semantic: bool = True,
) -> tuple[dict, float]:
    started = time.perf_counter()
    cell_config = config.with_overrides(seed=cell_seed(config.seed, index))
    side = scenes[0].features.side
    n_tokens = (side // alpha) ** 2 if side % alpha == 0 else 0
    beta = parse_beta(beta_label, n_tokens) if include_semantic else 0
    aris: list[float] = []
    coherences: list[float] = []
    objectives: list[float] = []
    budget = None
    for scene in scenes:
        profile = GranularityProfile(alpha, max(beta, 1), 0)
        result = run_pipeline(
            cell_config,
            scene.features,
            scene.saliency,
            question,
            fixed_profile=profile,
            include_semantic=include_semantic,
        )
        budget = result.budget
        agg = result.aggregation
        if agg.clustering is not None:
            truth = pool_labels(scene.planted, alpha).ravel()
            aris.append(adjusted_rand_score(truth, agg.clustering.assignments))
            coherences.append(float(np.mean([s.coherence_score for s in agg.scores])))
            objectives.append(agg.clustering.final_objective)
    row = {
        "cell": index,
        "kind": "cell" if include_semantic else "baseline",
        "alpha": alpha,
        "beta": str(beta_label) if include_semantic else "",
        "n_clusters": beta if include_semantic else 0,
        "cluster_input_tokens": n_tokens,
        "ari_mean": float(np.mean(aris)) if aris else math.nan,
        "ari_min": float(np.min(aris)) if aris else math.nan,
        "coherence_mean": float(np.mean(coherences)) if coherences else math.nan,
        "final_objective_mean": float(np.mean(objectives)) if objectives else math.nan,
        **budget.to_dict(),
    }
    return row, time.perf_counter() - started


def sweep(
    config: PipelineConfig,
    alphas,
    betas,
    scenes: list[SyntheticScene],
    jobs: int = 1,
    question_tokens=None,
    baseline: bool = True,
) -> tuple[pd.DataFrame, dict[str, float]]:
    """모든 (alpha, beta) cell 을 모든 scene 에 대해 실행.

    결과 표 (cell index 순, 마지막에 pixel-only baseline 행) 와 cell index 별
    실행 시간을 반환한다.
    """
    if not scenes:
        raise InvalidConfig("sweep needs at least one scene")
    question = (
        list(question_tokens)
        if question_tokens is not None
        else tokenize_question(SWEEP_QUESTION)
    )
    side = scenes[0].features.side
    cells = [(a, b) for a in alphas for b in betas]
    for a, _ in cells:
        if side % int(a) != 0:
            raise InvalidConfig(f"alpha={a} does not divide scene side {side}")
    tasks = [
        (config, i, int(a), b, scenes, question, True) for i, (a, b) in enumerate(cells)
    ]
    if baseline:
        tasks.append((config, len(cells), 1, "", scenes, question, False))

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        outcomes = list(pool.map(lambda t: _run_cell(*t), tasks))

    rows = [row for row, _ in outcomes]
    runtimes = {str(row["cell"]): seconds for row, seconds in outcomes}
    logger.info("[Sweep] %d cells × %d scenes done", len(tasks), len(scenes))
    return pd.DataFrame(rows), runtimes


def write_sweep_csv(table: pd.DataFrame, path) -> None:
    table.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")


# ---------------------------------------------------------------------------
# Head training on scenes
# ---------------------------------------------------------------------------
def prepare_samples(
    config: PipelineConfig,
    scenes: list[SyntheticScene],
    question_tokens,
    profile: GranularityProfile,
    params: ctl.ControllerParams,
) -> list[HeadSample]:
    """stop-gradient 전처리: scene 마다 pool / cluster / select 를 한 번씩."""
    embedding = ctl.encode_text_surrogate(
        question_tokens, params.text_dim, params.embed_seed
    )
    h = ctl.aggregate(embedding, params)
    context = lift_descriptor(h, params.W_p)
    samples = []
    for scene in scenes:
        agg = aggregate_tokens(config, scene.features, scene.saliency, profile)
        pixel_source = agg.pooled_features if config.pool_pixel_stream else scene.features
        samples.append(
            HeadSample(
                pixel_raw=pixel_source.tokens().copy(),
                semantic_raw=agg.semantic_tokens.copy(),
                text=embedding.vectors.copy(),
                context=context,
                label=scene.label,
            )
        )
    return samples


def train_on_scenes(
    config: PipelineConfig,
    scenes: list[SyntheticScene],
    question_tokens,
    profile: GranularityProfile,
    params: ctl.ControllerParams | None = None,
    n_classes: int = 2,
) -> tuple[HeadTrainResult, list[HeadSample], ProjectorBank]:
    if params is None:
        params = controller_for(config)
    samples = prepare_samples(config, scenes, question_tokens, profile, params)
    bank = projector_bank_for(config)
    hyper = HeadHyper(
        lr=config.head_lr,
        steps=config.head_steps,
        lambda_d=config.lambda_d,
        lambda_t=config.lambda_t,
        lam=config.lam,
    )
    result = train_heads(
        samples,
        bank.maps[profile.gamma],
        n_classes,
        hyper,
        train_projector=config.train_projector,
    )
    return result, samples, bank


def loss_trace_frame(result: HeadTrainResult) -> pd.DataFrame:
    return pd.DataFrame(
        [{"step": i, **b.to_dict()} for i, b in enumerate(result.loss_trace)]
    )
