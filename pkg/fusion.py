"""
Projector bank 과 F_mix 조립 모듈

F_mix = Φ_γ[pixel ⊕ semantic] ⊕ text

- projector 는 γ 로 고르는 선형 사상(W: C→D, bias: D) 묶음이다. 가중치는
  seed 기반 N(0, 1/√C) 로 초기화 후 고정한다 (train_projector 플래그가
  켜진 objective 학습만 예외).
- 순서: pixel(row-major) → semantic(점수 내림차순) → text.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from errors import BadGamma, DimensionMismatch
from tensors import ROLE_PIXEL, ROLE_SEMANTIC, ROLE_TEXT, TokenSequence

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinearMap:
    weight: np.ndarray  # (D, C)
    bias: np.ndarray  # (D,)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def apply(self, tokens: np.ndarray) -> np.ndarray:
        return tokens @ self.weight.T + self.bias


@dataclass(frozen=True)
class ProjectorBank:
    maps: tuple[LinearMap, ...]

    def __post_init__(self) -> None:
        if not self.maps:
            raise BadGamma("projector bank is empty")
        out_dims = {m.out_dim for m in self.maps}
        if len(out_dims) != 1:
            raise DimensionMismatch(
                f"projectors disagree on output dim: {sorted(out_dims)}",
                module="fusion",
            )
        for m in self.maps:
            if not (np.all(np.isfinite(m.weight)) and np.all(np.isfinite(m.bias))):
                raise DimensionMismatch("projector weights must be finite", module="fusion")

    def __len__(self) -> int:
        return len(self.maps)

    @property
    def out_dim(self) -> int:
        return self.maps[0].out_dim


def make_projector_bank(
    n_maps: int, in_dim: int, out_dim: int, seed: int
) -> ProjectorBank:
    """seed 고정 random bank. weight ~ N(0, 1/√C), bias 0."""
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(in_dim)
    maps = tuple(
        LinearMap(
            weight=rng.normal(0.0, scale, size=(out_dim, in_dim)),
            bias=np.zeros(out_dim),
        )
        for _ in range(n_maps)
    )
    return ProjectorBank(maps)


def project(tokens, bank: ProjectorBank, gamma: int) -> np.ndarray:
    if not 0 <= gamma < len(bank):
        raise BadGamma(f"gamma={gamma} outside projector bank of size {len(bank)}")
    arr = np.asarray(tokens, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    linear = bank.maps[gamma]
    if arr.shape[0] == 0:
        return np.empty((0, linear.out_dim))
    if arr.shape[1] != linear.in_dim:
        raise DimensionMismatch(
            f"token dim {arr.shape[1]} != projector input dim {linear.in_dim}",
            module="fusion",
        )
    return linear.apply(arr)


def assemble(pixel_tokens, semantic_tokens, text_tokens) -> TokenSequence:
    groups = [
        (ROLE_PIXEL, np.asarray(pixel_tokens, dtype=np.float64)),
        (ROLE_SEMANTIC, np.asarray(semantic_tokens, dtype=np.float64)),
        (ROLE_TEXT, np.asarray(text_tokens, dtype=np.float64)),
    ]
    dims = {arr.shape[1] for _, arr in groups if arr.ndim == 2 and arr.shape[0] > 0}
    if len(dims) > 1:
        raise DimensionMismatch(
            f"pixel/semantic/text dims disagree: {sorted(dims)}", module="fusion"
        )
    dim = dims.pop() if dims else 0
    blocks = []
    roles: list[str] = []
    for role, arr in groups:
        if arr.size == 0:
            continue
        blocks.append(arr.reshape(-1, dim))
        roles.extend([role] * blocks[-1].shape[0])
    tokens = np.concatenate(blocks, axis=0) if blocks else np.empty((0, dim))
    return TokenSequence(tokens=tokens, roles=tuple(roles))


@dataclass(frozen=True)
class TokenBudget:
    n_pixel: int
    n_semantic: int
    n_text: int
    total: int
    overhead_ratio: float

    def to_dict(self) -> dict:
        return {
            "n_pixel": self.n_pixel,
            "n_semantic": self.n_semantic,
            "n_text": self.n_text,
            "total": self.total,
            "overhead_ratio": self.overhead_ratio,
        }


def token_budget(seq: TokenSequence) -> TokenBudget:
    n_pixel = seq.role_count(ROLE_PIXEL)
    n_semantic = seq.role_count(ROLE_SEMANTIC)
    n_text = seq.role_count(ROLE_TEXT)
    ratio = n_semantic / n_pixel if n_pixel else 0.0
    return TokenBudget(n_pixel, n_semantic, n_text, len(seq), ratio)
