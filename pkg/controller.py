"""
Text-conditioned granularity Controller 모듈

질문 token 들로부터 granularity profile 분포를 예측하고 g* 를 고른다.

    u = tanh(mean_i E_i)                 (E: 질문 token embedding, l × D_t)
    h = W_p · u                          (compact descriptor, d_c)
    logits = W2 · relu(W1·h + b1) + b2   (n profiles)
    p = softmax(logits)

학습은 soft label cross-entropy 에 대한 full-batch gradient descent 이다.
Text encoder 는 교체 가능하다. 기본값은 외부 모델 없이 도는 hashed surrogate
(token id → 고정 pseudo-random 단위벡터 × 1/(1+i)) 이다.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from corpus import GranularityCorpus, make_synthetic_corpus
from errors import (
    DimensionMismatch,
    EmptyCorpus,
    EmptyQuestion,
    InvalidConfig,
    NonFiniteValue,
)
from tensors import DEFAULT_PROFILES, GranularityProfile

logger = logging.getLogger(__name__)

SOURCE_SURROGATE = "surrogate"
SOURCE_EXTERNAL = "external"

DEFAULT_TEXT_DIM = 64
DEFAULT_DESCRIPTOR_DIM = 32
DEFAULT_HIDDEN_DIM = 64
DEFAULT_LR = 0.05
DEFAULT_EPOCHS = 3000

PARAM_NAMES = ("W_p", "W1", "b1", "W2", "b2")


# ---------------------------------------------------------------------------
# Text embedding
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TextEmbedding:
    vectors: np.ndarray
    source: str = SOURCE_SURROGATE

    def __post_init__(self) -> None:
        arr = np.array(self.vectors, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise EmptyQuestion(
                f"text embedding needs shape (l>=1, D), got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue("text embedding contains non-finite values")
        if self.source not in (SOURCE_SURROGATE, SOURCE_EXTERNAL):
            raise DimensionMismatch(
                f"unknown embedding source {self.source!r}", module="controller"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "vectors", arr)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@lru_cache(maxsize=4096)
def _token_vector(token_id: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, token_id])
    vec = rng.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    vec.setflags(write=False)
    return vec


def encode_text_surrogate(
    token_ids, dim: int = DEFAULT_TEXT_DIM, seed: int = 0
) -> TextEmbedding:
    ids = [int(t) for t in (token_ids if token_ids is not None else ())]
    if not ids:
        raise EmptyQuestion("question has no tokens")
    if any(t < 0 for t in ids):
        raise DimensionMismatch("token ids must be non-negative", module="controller")
    vectors = np.stack(
        [_token_vector(t, dim, seed) / (1.0 + i) for i, t in enumerate(ids)]
    )
    return TextEmbedding(vectors=vectors, source=SOURCE_SURROGATE)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------
@dataclass
class ControllerParams:
    W_p: np.ndarray  # (d_c, D_t)
    W1: np.ndarray  # (d_h, d_c)
    b1: np.ndarray  # (d_h,)
    W2: np.ndarray  # (n, d_h)
    b2: np.ndarray  # (n,)
    profiles: tuple[GranularityProfile, ...] = DEFAULT_PROFILES
    embed_seed: int = 0

    def __post_init__(self) -> None:
        self.profiles = tuple(self.profiles)
        n = len(self.profiles)
        if n < 2:
            raise DimensionMismatch(f"need >= 2 profiles, got {n}", module="controller")
        d_c, _ = self.W_p.shape
        d_h = self.W1.shape[0]
        if (
            self.W1.shape != (d_h, d_c)
            or self.b1.shape != (d_h,)
            or self.W2.shape != (n, d_h)
            or self.b2.shape != (n,)
        ):
            raise DimensionMismatch(
                "controller weight shapes are inconsistent: "
                + ", ".join(f"{k}={getattr(self, k).shape}" for k in PARAM_NAMES),
                module="controller",
            )
        for name in PARAM_NAMES:
            if not np.all(np.isfinite(getattr(self, name))):
                raise NonFiniteValue(f"controller weight {name} is not finite")

    @property
    def text_dim(self) -> int:
        return self.W_p.shape[1]

    @property
    def descriptor_dim(self) -> int:
        return self.W_p.shape[0]

    @property
    def n_profiles(self) -> int:
        return len(self.profiles)

    def copy(self) -> ControllerParams:
        return ControllerParams(
            *(getattr(self, k).copy() for k in PARAM_NAMES),
            profiles=self.profiles,
            embed_seed=self.embed_seed,
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate([getattr(self, k).ravel() for k in PARAM_NAMES])

    def with_vector(self, vec: np.ndarray) -> ControllerParams:
        arrays = []
        offset = 0
        for name in PARAM_NAMES:
            shape = getattr(self, name).shape
            size = int(np.prod(shape))
            arrays.append(np.array(vec[offset : offset + size]).reshape(shape))
            offset += size
        return ControllerParams(
            *arrays, profiles=self.profiles, embed_seed=self.embed_seed
        )

    def to_dict(self) -> dict:
        data = {k: getattr(self, k).tolist() for k in PARAM_NAMES}
        data["profiles"] = [p.to_dict() for p in self.profiles]
        data["embed_seed"] = self.embed_seed
        return data

    @classmethod
    def from_dict(cls, data: dict) -> ControllerParams:
        profiles = tuple(
            GranularityProfile(p["alpha"], p["beta"], p["gamma"], name=p.get("name", ""))
            for p in data["profiles"]
        )
        return cls(
            *(np.array(data[k], dtype=np.float64) for k in PARAM_NAMES),
            profiles=profiles,
            embed_seed=int(data.get("embed_seed", 0)),
        )


def init_params(
    profiles=DEFAULT_PROFILES,
    text_dim: int = DEFAULT_TEXT_DIM,
    descriptor_dim: int = DEFAULT_DESCRIPTOR_DIM,
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
    seed: int = 0,
    embed_seed: int = 0,
) -> ControllerParams:
    """W_p ~ N(0,1), W1 ~ N(0, 2/d_c), W2 ~ N(0, 1/d_h), zero biases."""
    rng = np.random.default_rng(seed)
    n = len(profiles)
    return ControllerParams(
        W_p=rng.normal(0.0, 1.0, size=(descriptor_dim, text_dim)),
        W1=rng.normal(
            0.0, np.sqrt(2.0 / descriptor_dim), size=(hidden_dim, descriptor_dim)
        ),
        b1=np.zeros(hidden_dim),
        W2=rng.normal(0.0, np.sqrt(1.0 / hidden_dim), size=(n, hidden_dim)),
        b2=np.zeros(n),
        profiles=tuple(profiles),
        embed_seed=embed_seed,
    )


def save_params(params: ControllerParams, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(params.to_dict(), sort_keys=True) + "\n", encoding="utf-8"
    )


def load_params(path: str | Path) -> ControllerParams:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return ControllerParams.from_dict(data)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InvalidConfig(
            f"controller file {path} is malformed: {exc}", module="controller"
        ) from None


# ---------------------------------------------------------------------------
# Forward
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class GranularityDistribution:
    probs: np.ndarray
    profiles: tuple[GranularityProfile, ...]
    logits: np.ndarray = field(default=None, compare=False)

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=np.float64)
        if probs.shape != (len(self.profiles),):
            raise DimensionMismatch(
                f"{probs.shape[0]} probs for {len(self.profiles)} profiles",
                module="controller",
            )
        if np.any(probs < 0) or np.any(probs > 1) or abs(probs.sum() - 1.0) > 1e-9:
            raise DimensionMismatch(
                f"not a distribution: {probs.tolist()}", module="controller"
            )
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def to_dict(self) -> dict:
        return {
            "probs": [float(p) for p in self.probs],
            "profiles": [p.to_dict() for p in self.profiles],
        }


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def squash(embedding: TextEmbedding) -> np.ndarray:
    """σ(mean_i E_i) with σ = tanh."""
    return np.tanh(embedding.vectors.mean(axis=0))


def aggregate(embedding: TextEmbedding, params: ControllerParams) -> np.ndarray:
    if embedding.dim != params.text_dim:
        raise DimensionMismatch(
            f"embedding dim {embedding.dim} != controller text dim {params.text_dim}",
            module="controller",
        )
    return params.W_p @ squash(embedding)


def _logits(h: np.ndarray, params: ControllerParams) -> np.ndarray:
    """h (d_c,) 또는 (N, d_c) → profile logits."""
    hidden = np.maximum(h @ params.W1.T + params.b1, 0.0)
    return hidden @ params.W2.T + params.b2


def predict(h, params: ControllerParams) -> GranularityDistribution:
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (params.descriptor_dim,):
        raise DimensionMismatch(
            f"descriptor shape {h.shape} != ({params.descriptor_dim},)",
            module="controller",
        )
    logits = _logits(h, params)
    return GranularityDistribution(
        probs=softmax(logits), profiles=params.profiles, logits=logits
    )


def select(dist: GranularityDistribution) -> GranularityProfile:
    # np.argmax returns the first maximum
    return dist.profiles[int(np.argmax(dist.probs))]


def select_index(dist: GranularityDistribution) -> int:
    return int(np.argmax(dist.probs))


def expected_profile(dist: GranularityDistribution) -> np.ndarray:
    table = np.array([p.as_tuple() for p in dist.profiles], dtype=np.float64)
    return dist.probs @ table


def predict_question(
    token_ids, params: ControllerParams, embedding: TextEmbedding | None = None
) -> tuple[GranularityDistribution, np.ndarray]:
    """임베딩 (없으면 surrogate 생성) → aggregate → predict. (dist, h) 반환."""
    if embedding is None:
        embedding = encode_text_surrogate(token_ids, params.text_dim, params.embed_seed)
    h = aggregate(embedding, params)
    return predict(h, params), h


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ControllerHyper:
    lr: float = DEFAULT_LR
    epochs: int = DEFAULT_EPOCHS
    seed: int = 0


@dataclass
class ControllerTrainResult:
    params: ControllerParams
    loss_trace: list[float]


def corpus_inputs(corpus: GranularityCorpus, params: ControllerParams) -> np.ndarray:
    """item 마다 한 행, squash 된 평균 임베딩의 (N, D_t) 행렬."""
    rows = [
        encode_text_surrogate(item.token_ids, params.text_dim, params.embed_seed)
        for item in corpus.items
    ]
    return np.stack([squash(e) for e in rows])


def batch_loss_and_grad(
    params: ControllerParams, inputs: np.ndarray, labels: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """soft-label cross-entropy 평균과 모든 weight 의 gradient."""
    n_items = inputs.shape[0]
    h = inputs @ params.W_p.T
    z = h @ params.W1.T + params.b1
    a = np.maximum(z, 0.0)
    logits = a @ params.W2.T + params.b2
    loss = float(-np.sum(labels * log_softmax(logits)) / n_items)

    g = (softmax(logits) - labels) / n_items
    d_a = g @ params.W2
    d_z = d_a * (z > 0)
    d_h = d_z @ params.W1
    grads = {
        "W2": g.T @ a,
        "b2": g.sum(axis=0),
        "W1": d_z.T @ h,
        "b1": d_z.sum(axis=0),
        "W_p": d_h.T @ inputs,
    }
    return loss, grads


def grad_vector(grads: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([grads[k].ravel() for k in PARAM_NAMES])


def train(
    corpus: GranularityCorpus,
    init: ControllerParams | None = None,
    hyper: ControllerHyper = ControllerHyper(),
) -> ControllerTrainResult:
    if len(corpus) == 0:
        raise EmptyCorpus("cannot train the controller on an empty corpus")
    if hyper.lr < 0:
        raise InvalidConfig(f"lr must be >= 0, got {hyper.lr}", module="controller")
    if init is None:
        init = init_params(
            profiles=DEFAULT_PROFILES[: corpus.n_profiles], seed=hyper.seed
        )
    if corpus.n_profiles != init.n_profiles:
        raise DimensionMismatch(
            f"corpus has {corpus.n_profiles} classes, controller {init.n_profiles}",
            module="controller",
        )
    params = init.copy()
    if hyper.lr == 0:
        return ControllerTrainResult(params=params, loss_trace=[])

    inputs = corpus_inputs(corpus, params)
    labels = corpus.labels()
    trace: list[float] = []
    for epoch in range(hyper.epochs):
        loss, grads = batch_loss_and_grad(params, inputs, labels)
        trace.append(loss)
        for name in PARAM_NAMES:
            setattr(params, name, getattr(params, name) - hyper.lr * grads[name])
        if epoch % 500 == 0:
            logger.info("[Controller] epoch=%d loss=%.6f", epoch, loss)
    logger.info(
        "[Controller] trained %d epochs, final loss=%.6f", hyper.epochs, trace[-1]
    )
    return ControllerTrainResult(params=params, loss_trace=trace)


def accuracy(params: ControllerParams, corpus: GranularityCorpus) -> float:
    inputs = corpus_inputs(corpus, params)
    logits = _logits(inputs @ params.W_p.T, params)
    return float(np.mean(np.argmax(logits, axis=1) == corpus.hard_labels()))


@lru_cache(maxsize=8)
def default_controller(
    profiles: tuple[GranularityProfile, ...] = DEFAULT_PROFILES,
    text_dim: int = DEFAULT_TEXT_DIM,
    descriptor_dim: int = DEFAULT_DESCRIPTOR_DIM,
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
    items_per_class: int = 200,
    seed: int = 0,
    lr: float = DEFAULT_LR,
    epochs: int = DEFAULT_EPOCHS,
) -> ControllerParams:
    """synthetic corpus 로 학습한 controller (인자 조합별 memoize).

    반환 객체는 공유되므로 따로 쓸 복사본은 trained_controller 로 받는다.
    """
    corpus = make_synthetic_corpus(len(profiles), items_per_class, seed)
    init = init_params(profiles, text_dim, descriptor_dim, hidden_dim, seed=seed)
    result = train(corpus, init, ControllerHyper(lr=lr, epochs=epochs, seed=seed))
    return result.params


def trained_controller(**kwargs) -> ControllerParams:
    return default_controller(**kwargs).copy()
