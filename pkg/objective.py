"""
Contribution objective 과 total loss 모듈

    J = E_pixel[log p_d] + λ · E_sema[log p_t]
    L = L_task + λ_d · L_pixel + λ_t · L_sema,   L_pixel = −E log p_d, L_sema = −E log p_t

p(C | token, T) 는 text 로 변조한 token 위의 logistic head 다:

    p = σ(w · (token ⊙ c) + b),   c = W_pᵀ · h

h 는 Controller descriptor (d_c), W_p 는 Controller 의 projection 이므로
c 의 차원은 D_t 이고 token 차원 D 와 같아야 한다.

clustering 은 미분 불가 → 학습 step 마다 고정 전처리(stop-gradient)로 본다.
기댓값은 sample 안에서 token 평균, 그 다음 sample 평균.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from errors import DimensionMismatch, EmptyCorpus, EmptyTokenSet, InvalidConfig
from fusion import LinearMap
from tensors import TokenSequence

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA = 1.0
DEFAULT_LAMBDA_D = 0.1
DEFAULT_LAMBDA_T = 0.1
DEFAULT_HEAD_LR = 0.1
DEFAULT_HEAD_STEPS = 500


@dataclass
class ConfidenceHead:
    w: np.ndarray
    b: float = 0.0

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = float(self.b)
        if not (np.all(np.isfinite(self.w)) and np.isfinite(self.b)):
            raise DimensionMismatch("confidence head must be finite", module="objective")

    @classmethod
    def zeros(cls, dim: int) -> ConfidenceHead:
        return cls(np.zeros(dim), 0.0)


@dataclass
class LinearClassifier:
    weight: np.ndarray  # (n_classes, D)
    bias: np.ndarray  # (n_classes,)

    @classmethod
    def zeros(cls, n_classes: int, dim: int) -> LinearClassifier:
        return cls(np.zeros((n_classes, dim)), np.zeros(n_classes))

    @property
    def n_classes(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class LossBreakdown:
    task: float
    pixel: float
    sema: float
    total: float
    lambdas: tuple[float, float, float]

    def to_dict(self) -> dict:
        lambda_d, lambda_t, lam = self.lambdas
        return {
            "task": self.task,
            "pixel": self.pixel,
            "sema": self.sema,
            "total": self.total,
            "lambda_d": lambda_d,
            "lambda_t": lambda_t,
            "lambda": lam,
        }


# ---------------------------------------------------------------------------
# Likelihoods
# ---------------------------------------------------------------------------
def lift_descriptor(h: np.ndarray, w_p: np.ndarray) -> np.ndarray:
    """controller descriptor (d_c) → token 공간 context c = W_pᵀ h."""
    return np.asarray(w_p, dtype=np.float64).T @ np.asarray(h, dtype=np.float64)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -np.asarray(z, dtype=np.float64))


def _logit(tokens: np.ndarray, context: np.ndarray, head: ConfidenceHead):
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.shape[-1] != context.shape[0] or head.w.shape[0] != context.shape[0]:
        raise DimensionMismatch(
            f"token dim {tokens.shape[-1]}, context dim {context.shape[0]} and "
            f"head dim {head.w.shape[0]} must agree",
            module="objective",
        )
    return (tokens * context) @ head.w + head.b


def likelihood(token, context, head: ConfidenceHead) -> float:
    z = _logit(token, np.asarray(context, dtype=np.float64), head)
    return float(_sigmoid(z))


def contribution_from_likelihoods(pixel_probs, semantic_probs, lam: float) -> float:
    pixel_probs = np.asarray(pixel_probs, dtype=np.float64)
    semantic_probs = np.asarray(semantic_probs, dtype=np.float64)
    if pixel_probs.size == 0 or semantic_probs.size == 0:
        raise EmptyTokenSet("contribution needs pixel and semantic tokens")
    return float(np.mean(np.log(pixel_probs)) + lam * np.mean(np.log(semantic_probs)))


def contribution_terms(
    pixel_tokens, semantic_tokens, context, pixel_head, sema_head
) -> tuple[float, float]:
    """(pixel token 의 E log p_d, semantic token 의 E log p_t)."""
    pixel_tokens = np.asarray(pixel_tokens, dtype=np.float64)
    semantic_tokens = np.asarray(semantic_tokens, dtype=np.float64)
    if pixel_tokens.size == 0 or semantic_tokens.size == 0:
        raise EmptyTokenSet("contribution needs pixel and semantic tokens")
    context = np.asarray(context, dtype=np.float64)
    pix = float(np.mean(_log_sigmoid(_logit(pixel_tokens, context, pixel_head))))
    sem = float(np.mean(_log_sigmoid(_logit(semantic_tokens, context, sema_head))))
    return pix, sem


def contribution_objective(
    pixel_tokens,
    semantic_tokens,
    context,
    heads: tuple[ConfidenceHead, ConfidenceHead],
    lam: float = DEFAULT_LAMBDA,
) -> float:
    pix, sem = contribution_terms(pixel_tokens, semantic_tokens, context, *heads)
    return pix + lam * sem


def total_loss(
    task_loss: float,
    pixel_loss: float,
    sema_loss: float,
    lambda_d: float = DEFAULT_LAMBDA_D,
    lambda_t: float = DEFAULT_LAMBDA_T,
    lam: float = DEFAULT_LAMBDA,
) -> LossBreakdown:
    if min(lambda_d, lambda_t, lam) < 0:
        raise InvalidConfig("loss weights must be >= 0", module="objective")
    total = task_loss + lambda_d * pixel_loss + lambda_t * sema_loss
    return LossBreakdown(
        task=float(task_loss),
        pixel=float(pixel_loss),
        sema=float(sema_loss),
        total=float(total),
        lambdas=(float(lambda_d), float(lambda_t), float(lam)),
    )


def cross_entropy(logits: np.ndarray, label: int) -> float:
    shifted = logits - np.max(logits)
    return float(np.log(np.exp(shifted).sum()) - shifted[label])


def synthetic_task_loss(seq, label: int, classifier: LinearClassifier) -> float:
    """평균 token 에 classifier 를 적용한 softmax cross-entropy."""
    tokens = seq.tokens if isinstance(seq, TokenSequence) else np.asarray(seq)
    if tokens.shape[0] == 0:
        raise EmptyTokenSet("task loss needs a non-empty token sequence")
    logits = classifier.weight @ tokens.mean(axis=0) + classifier.bias
    return cross_entropy(logits, label)


# ---------------------------------------------------------------------------
# Head training
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class HeadSample:
    """stop-gradient 전처리를 마친 scene 하나.

    pixel_raw / semantic_raw 는 projection 전 (C 차원), text 는 이미 token 공간,
    context 는 token 공간으로 올린 controller descriptor.
    """

    pixel_raw: np.ndarray
    semantic_raw: np.ndarray
    text: np.ndarray
    context: np.ndarray
    label: int


@dataclass
class TrainableHeads:
    pixel_head: ConfidenceHead
    sema_head: ConfidenceHead
    classifier: LinearClassifier
    projector: LinearMap | None = None

    def arrays(self) -> list[np.ndarray]:
        items = [
            self.pixel_head.w,
            np.array([self.pixel_head.b]),
            self.sema_head.w,
            np.array([self.sema_head.b]),
            self.classifier.weight,
            self.classifier.bias,
        ]
        if self.projector is not None:
            items += [self.projector.weight, self.projector.bias]
        return items

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_vector(self, vec: np.ndarray) -> TrainableHeads:
        shapes = [a.shape for a in self.arrays()]
        parts = []
        offset = 0
        for shape in shapes:
            size = int(np.prod(shape))
            parts.append(np.array(vec[offset : offset + size]).reshape(shape))
            offset += size
        projector = None
        if self.projector is not None:
            projector = LinearMap(weight=parts[6], bias=parts[7])
        return TrainableHeads(
            pixel_head=ConfidenceHead(parts[0], parts[1][0]),
            sema_head=ConfidenceHead(parts[2], parts[3][0]),
            classifier=LinearClassifier(parts[4], parts[5]),
            projector=projector,
        )

    def copy(self) -> TrainableHeads:
        return self.with_vector(self.to_vector())


@dataclass(frozen=True)
class HeadHyper:
    lr: float = DEFAULT_HEAD_LR
    steps: int = DEFAULT_HEAD_STEPS
    lambda_d: float = DEFAULT_LAMBDA_D
    lambda_t: float = DEFAULT_LAMBDA_T
    lam: float = DEFAULT_LAMBDA


@dataclass
class HeadTrainResult:
    heads: TrainableHeads
    loss_trace: list[LossBreakdown] = field(default_factory=list)

    def totals(self) -> list[float]:
        return [b.total for b in self.loss_trace]


def init_heads(
    dim: int, n_classes: int, projector: LinearMap | None = None
) -> TrainableHeads:
    """head 와 classifier 는 0 에서, projector (학습할 때) 는 bank 값에서 시작."""
    if projector is not None:
        projector = LinearMap(projector.weight.copy(), projector.bias.copy())
    return TrainableHeads(
        pixel_head=ConfidenceHead.zeros(dim),
        sema_head=ConfidenceHead.zeros(dim),
        classifier=LinearClassifier.zeros(n_classes, dim),
        projector=projector,
    )


def _project(raw: np.ndarray, projector: LinearMap) -> np.ndarray:
    return raw @ projector.weight.T + projector.bias


def loss_and_grad(
    heads: TrainableHeads,
    samples: list[HeadSample],
    frozen_projector: LinearMap,
    hyper: HeadHyper = HeadHyper(),
) -> tuple[LossBreakdown, np.ndarray]:
    """Mean LossBreakdown over samples and the gradient of its total.

    The gradient is flattened in TrainableHeads.to_vector order. When
    heads.projector is None the frozen projector is used and receives no
    gradient.
    """
    if not samples:
        raise EmptyCorpus("head training needs at least one sample", module="objective")
    projector = heads.projector if heads.projector is not None else frozen_projector
    n_samples = len(samples)
    lambda_d, lambda_t = hyper.lambda_d, hyper.lambda_t
    ph, sh, clf = heads.pixel_head, heads.sema_head, heads.classifier

    g_pw = np.zeros_like(ph.w)
    g_pb = 0.0
    g_sw = np.zeros_like(sh.w)
    g_sb = 0.0
    g_cw = np.zeros_like(clf.weight)
    g_cb = np.zeros_like(clf.bias)
    g_projw = np.zeros_like(projector.weight)
    g_projb = np.zeros_like(projector.bias)

    task_sum = pixel_sum = sema_sum = 0.0
    for s in samples:
        if s.pixel_raw.shape[0] == 0 or s.semantic_raw.shape[0] == 0:
            raise EmptyTokenSet("every sample needs pixel and semantic tokens")
        pix = _project(s.pixel_raw, projector)
        sem = _project(s.semantic_raw, projector)
        n_pix, n_sem = pix.shape[0], sem.shape[0]
        n_all = n_pix + n_sem + s.text.shape[0]
        c = s.context

        # task: CE(softmax(W m + b), label), m = mean of every token
        m = (pix.sum(axis=0) + sem.sum(axis=0) + s.text.sum(axis=0)) / n_all
        logits = clf.weight @ m + clf.bias
        task_sum += cross_entropy(logits, s.label)
        shifted = np.exp(logits - logits.max())
        g_logits = shifted / shifted.sum()
        g_logits[s.label] -= 1.0
        g_cw += np.outer(g_logits, m) / n_samples
        g_cb += g_logits / n_samples
        g_m = clf.weight.T @ g_logits / n_samples

        # contribution heads: −mean log σ(z)
        pix_ctx = pix * c
        sem_ctx = sem * c
        z_pix = pix_ctx @ ph.w + ph.b
        z_sem = sem_ctx @ sh.w + sh.b
        pixel_sum += float(-np.mean(_log_sigmoid(z_pix)))
        sema_sum += float(-np.mean(_log_sigmoid(z_sem)))
        r_pix = (_sigmoid(z_pix) - 1.0) * lambda_d / (n_pix * n_samples)
        r_sem = (_sigmoid(z_sem) - 1.0) * lambda_t / (n_sem * n_samples)
        g_pw += r_pix @ pix_ctx
        g_pb += float(r_pix.sum())
        g_sw += r_sem @ sem_ctx
        g_sb += float(r_sem.sum())

        if heads.projector is not None:
            d_pix = np.outer(r_pix, ph.w * c) + g_m / n_all
            d_sem = np.outer(r_sem, sh.w * c) + g_m / n_all
            g_projw += d_pix.T @ s.pixel_raw + d_sem.T @ s.semantic_raw
            g_projb += d_pix.sum(axis=0) + d_sem.sum(axis=0)

    breakdown = total_loss(
        task_sum / n_samples,
        pixel_sum / n_samples,
        sema_sum / n_samples,
        lambda_d,
        lambda_t,
        hyper.lam,
    )
    parts = [g_pw, np.array([g_pb]), g_sw, np.array([g_sb]), g_cw, g_cb]
    if heads.projector is not None:
        parts += [g_projw, g_projb]
    return breakdown, np.concatenate([p.ravel() for p in parts])


def train_heads(
    samples: list[HeadSample],
    frozen_projector: LinearMap,
    n_classes: int,
    hyper: HeadHyper = HeadHyper(),
    train_projector: bool = False,
    init: TrainableHeads | None = None,
) -> HeadTrainResult:
    """LossBreakdown.total 에 대한 full-batch gradient descent.

    trace 에는 step 마다 직전 breakdown 과, 마지막 step 뒤 값 하나가 더 들어간다.
    """
    if not samples:
        raise EmptyCorpus("head training needs at least one sample", module="objective")
    if hyper.lr < 0:
        raise InvalidConfig(f"lr must be >= 0, got {hyper.lr}", module="objective")
    dim = samples[0].context.shape[0]
    if init is None:
        init = init_heads(dim, n_classes, frozen_projector if train_projector else None)
    heads = init.copy()
    if hyper.lr == 0:
        return HeadTrainResult(heads=heads)

    trace: list[LossBreakdown] = []
    vec = heads.to_vector()
    for step in range(hyper.steps):
        breakdown, grad = loss_and_grad(heads, samples, frozen_projector, hyper)
        trace.append(breakdown)
        vec = vec - hyper.lr * grad
        heads = heads.with_vector(vec)
        if step % 100 == 0:
            logger.info("[Objective] step=%d total=%.6f", step, breakdown.total)
    final, _ = loss_and_grad(heads, samples, frozen_projector, hyper)
    trace.append(final)
    logger.info(
        "[Objective] trained %d steps: total %.6f → %.6f",
        hyper.steps,
        trace[0].total,
        final.total,
    )
    return HeadTrainResult(heads=heads, loss_trace=trace)
