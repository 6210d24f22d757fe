"""
Central finite-difference gradient 검증 헬퍼

controller 와 objective 학습의 analytic gradient 를 무작위 좌표에서
(f(x+h) − f(x−h)) / 2h 와 비교한다.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DEFAULT_COORDS = 20
# both analytic and numeric below this magnitude count as agreeing zeros
MIN_GRAD = 1e-6


@dataclass(frozen=True)
class GradCheckResult:
    coords: np.ndarray
    analytic: np.ndarray
    numeric: np.ndarray
    rel_errors: np.ndarray

    @property
    def max_rel_error(self) -> float:
        return float(self.rel_errors.max()) if self.rel_errors.size else 0.0


def central_difference(
    func: Callable[[np.ndarray], float],
    x: np.ndarray,
    index: int,
    step: float = DEFAULT_STEP,
) -> float:
    plus = x.copy()
    minus = x.copy()
    plus[index] += step
    minus[index] -= step
    return (func(plus) - func(minus)) / (2.0 * step)


def relative_error(analytic: float, numeric: float) -> float:
    if abs(analytic) < MIN_GRAD and abs(numeric) < MIN_GRAD:
        return 0.0
    scale = max(abs(analytic), abs(numeric), 1e-12)
    return abs(analytic - numeric) / scale


def check_gradient(
    func: Callable[[np.ndarray], float],
    grad: np.ndarray,
    x: np.ndarray,
    n_coords: int = DEFAULT_COORDS,
    seed: int = 0,
    step: float = DEFAULT_STEP,
) -> GradCheckResult:
    """임의 좌표 n_coords 개에서 grad 를 central difference 와 비교.

    좌표는 벡터 전체에서 비복원 추출한다 (n_coords 보다 짧으면 전부).
    analytic gradient 가 잘못 0 인 좌표도 비교 대상에 들어간다.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    rng = np.random.default_rng(seed)
    count = min(n_coords, grad.size)
    coords = np.sort(rng.choice(grad.size, size=count, replace=False))
    numeric = np.array([central_difference(func, x, int(i), step) for i in coords])
    analytic = grad[coords]
    errors = np.array(
        [relative_error(a, n) for a, n in zip(analytic, numeric, strict=True)]
    )
    result = GradCheckResult(coords, analytic, numeric, errors)
    logger.info(
        "[GradCheck] %d coords, max relative error %.3e",
        count,
        result.max_rel_error,
    )
    return result
