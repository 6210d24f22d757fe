"""
공용 dense 컨테이너 모듈

FeatureMap / SaliencyMap / TokenSequence / GranularityProfile 과 기초적인
grid 연산(flatten, saliency 정규화)을 제공한다.

설계 메모
---------
- 모든 grid 는 정사각형(side×side)이다. K^T·F·K 형태의 bilinear pooling 이
  커널 하나로 두 축을 같이 줄이므로, 직사각형 입력은 ingestion 시점에서
  ``NonSquareGrid`` 로 거절한다.
- 좌표는 셀 중심을 [0,1]² 로 정규화한 값이다: dispersion 점수가 해상도에
  독립적이도록.
- 연산은 전부 입력을 수정하지 않는 순수 함수다. 내부 배열은 생성 시 복사 후
  read-only 로 잠근다.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from errors import AllZeroSaliency, DimensionMismatch, NonFiniteValue, NonSquareGrid

logger = logging.getLogger(__name__)

ROLE_PIXEL = "pixel"
ROLE_SEMANTIC = "semantic"
ROLE_TEXT = "text"
TOKEN_ROLES: tuple[str, ...] = (ROLE_PIXEL, ROLE_SEMANTIC, ROLE_TEXT)

SALIENCY_SUM_TOL = 1e-9


def _frozen_copy(values, *, ndim: int, what: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{what} must have {ndim} dims, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{what} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FeatureMap:
    """C 차원 token feature 의 side×side grid (row-major)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = _frozen_copy(self.data, ndim=3, what="feature map")
        if arr.shape[0] != arr.shape[1]:
            raise NonSquareGrid(
                f"feature grid must be square, got {arr.shape[0]}x{arr.shape[1]}"
            )
        if arr.shape[0] < 1 or arr.shape[2] < 1:
            raise DimensionMismatch(f"empty feature map: shape {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def side(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def tokens(self) -> np.ndarray:
        """(side², C) row-major view of the grid."""
        return self.data.reshape(self.side * self.side, self.channels)


@dataclass(frozen=True)
class SaliencyMap:
    """위치별 non-negative attention 질량, 합은 1."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = _frozen_copy(self.data, ndim=2, what="saliency map")
        if arr.shape[0] != arr.shape[1]:
            raise NonSquareGrid(
                f"saliency grid must be square, got {arr.shape[0]}x{arr.shape[1]}"
            )
        if np.any(arr < 0):
            raise DimensionMismatch("saliency values must be non-negative")
        total = float(arr.sum())
        if abs(total - 1.0) > SALIENCY_SUM_TOL:
            raise DimensionMismatch(
                f"saliency must sum to 1 (got {total!r}); use normalize_saliency"
            )
        object.__setattr__(self, "data", arr)

    @property
    def side(self) -> int:
        return self.data.shape[0]

    def values(self) -> np.ndarray:
        """(side²,) row-major saliency values."""
        return self.data.reshape(-1)


@dataclass(frozen=True)
class TokenSequence:
    """role 이 붙은 순서 있는 token 열 (혼합 시퀀스 F_mix)."""

    tokens: np.ndarray
    roles: tuple[str, ...]

    def __post_init__(self) -> None:
        arr = _frozen_copy(self.tokens, ndim=2, what="token sequence")
        roles = tuple(self.roles)
        if arr.shape[0] != len(roles):
            raise DimensionMismatch(
                f"{arr.shape[0]} tokens but {len(roles)} roles", module="fusion"
            )
        unknown = sorted(set(roles) - set(TOKEN_ROLES))
        if unknown:
            raise DimensionMismatch(f"unknown token roles: {unknown}", module="fusion")
        object.__setattr__(self, "tokens", arr)
        object.__setattr__(self, "roles", roles)

    def __len__(self) -> int:
        return len(self.roles)

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    def role_count(self, role: str) -> int:
        return sum(1 for r in self.roles if r == role)


@dataclass(frozen=True)
class GranularityProfile:
    """g_k = (alpha, beta, gamma): pooling factor, cluster count, projector index."""

    alpha: int
    beta: int
    gamma: int = 0
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        for label, value, lower in (
            ("alpha", self.alpha, 1),
            ("beta", self.beta, 1),
            ("gamma", self.gamma, 0),
        ):
            if int(value) != value or value < lower:
                raise DimensionMismatch(
                    f"profile {label} must be an integer >= {lower}, got {value!r}",
                    module="controller",
                )
            object.__setattr__(self, label, int(value))

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.alpha, self.beta, self.gamma)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
        }


# coarse / medium / fine: alpha=4 is the 4x4 pooling case, beta 5..50
# brackets the cluster-count ablation range.
DEFAULT_PROFILES: tuple[GranularityProfile, ...] = (
    GranularityProfile(4, 5, 0, name="coarse"),
    GranularityProfile(2, 20, 1, name="medium"),
    GranularityProfile(1, 50, 2, name="fine"),
)


# ---------------------------------------------------------------------------
# Grid operations
# ---------------------------------------------------------------------------
def grid_coords(side: int) -> np.ndarray:
    """(side², 2) normalized cell-center coordinates, row-major.

    Location (r, c) maps to ((c + 0.5) / side, (r + 0.5) / side).
    """
    centers = (np.arange(side, dtype=np.float64) + 0.5) / side
    xs = np.tile(centers, side)
    ys = np.repeat(centers, side)
    return np.stack([xs, ys], axis=1)


def flatten_grid(fmap: FeatureMap) -> list[tuple[tuple[float, float], np.ndarray]]:
    """feature grid 의 row-major (coord, feature) 항목."""
    coords = grid_coords(fmap.side)
    tokens = fmap.tokens()
    return [
        ((float(coords[i, 0]), float(coords[i, 1])), tokens[i].copy())
        for i in range(tokens.shape[0])
    ]


def unflatten_grid(entries: list[tuple[tuple[float, float], np.ndarray]]) -> FeatureMap:
    """flatten_grid 의 역변환."""
    n = len(entries)
    side = int(round(np.sqrt(n)))
    if side * side != n or n == 0:
        raise NonSquareGrid(f"{n} entries do not form a square grid")
    stacked = np.stack([np.asarray(feature) for _, feature in entries])
    return FeatureMap(stacked.reshape(side, side, -1))


def normalize_mass(raw) -> np.ndarray:
    """non-negative 값을 합 1 로 스케일 (shape 무관)."""
    arr = np.array(raw, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue("saliency contains non-finite values")
    if np.any(arr < 0):
        raise DimensionMismatch("saliency values must be non-negative")
    total = float(arr.sum())
    if total <= 0.0:
        raise AllZeroSaliency("every saliency entry is zero")
    return arr / total


def normalize_saliency(raw) -> SaliencyMap:
    """non-negative raw grid 를 정규화해 SaliencyMap 으로.

    정사각 2-D grid, 또는 길이가 제곱수인 1-D 벡터 (row-major reshape) 를 받는다.
    """
    normalized = normalize_mass(raw)
    if normalized.ndim == 1:
        side = int(round(np.sqrt(normalized.size)))
        if side * side != normalized.size:
            raise NonSquareGrid(
                f"{normalized.size} saliency values do not form a square grid"
            )
        normalized = normalized.reshape(side, side)
    return SaliencyMap(normalized)


def uniform_saliency(side: int) -> SaliencyMap:
    return normalize_saliency(np.ones((side, side)))
