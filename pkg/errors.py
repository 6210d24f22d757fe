"""
파이프라인 공통 예외 모듈

모든 예외는 ``AdataError`` 하나를 루트로 하고, CLI 종료 코드에 맞춰 세 갈래로
나뉜다:

- ``InputError``   → exit 2 (입력 파일/인자 문제)
- ``ConfigError``  → exit 3 (프로파일/설정 조합 문제)
- ``NumericError`` → exit 4 (수치 실패)

각 예외는 ``<module>.<ErrorName>`` 형태의 코드를 가진다. CLI 는 이 코드와
메시지만 stderr 에 출력하고 traceback 은 남기지 않는다.
"""

from __future__ import annotations


class AdataError(ValueError):
    """모든 pipeline 오류의 루트."""

    exit_code: int = 2
    # Module that owns the error. Shared errors (DimensionMismatch) take
    # the raising module at construction instead.
    module: str = "adata"

    def __init__(self, message: str, *, module: str | None = None) -> None:
        super().__init__(message)
        if module is not None:
            self.module = module

    @property
    def code(self) -> str:
        return f"{self.module}.{type(self).__name__}"


class InputError(AdataError):
    exit_code = 2


class ConfigError(AdataError):
    exit_code = 3


class NumericError(AdataError):
    exit_code = 4


# ---------------------------------------------------------------------------
# tensors
# ---------------------------------------------------------------------------
class AllZeroSaliency(InputError):
    """saliency 가 전부 0 이라 attention 입력으로 쓸 수 없음."""

    module = "tensors"


class NonFiniteValue(NumericError):
    module = "tensors"


class DimensionMismatch(InputError):
    module = "tensors"


class NonSquareGrid(DimensionMismatch):
    """Rectangular grids are rejected at ingestion (K^T·F·K needs H'=W')."""


# ---------------------------------------------------------------------------
# controller
# ---------------------------------------------------------------------------
class EmptyQuestion(InputError):
    module = "controller"


class EmptyCorpus(InputError):
    module = "controller"


# ---------------------------------------------------------------------------
# pooling / clustering / selection / fusion / objective
# ---------------------------------------------------------------------------
class NonDivisible(ConfigError):
    """alpha 가 grid 한 변을 나누지 못함 (profile 과 grid 불일치)."""

    module = "pooling"


class TooManyClusters(ConfigError):
    """M 이 pooled token 수보다 큼 (beta 와 alpha 불일치)."""

    module = "clustering"


class InvalidTopK(ConfigError):
    module = "selection"


class ZeroVector(NumericError):
    module = "selection"


class BadGamma(ConfigError):
    module = "fusion"


class EmptyTokenSet(InputError):
    module = "objective"


# ---------------------------------------------------------------------------
# harness
# ---------------------------------------------------------------------------
class BadMagic(InputError):
    module = "harness"


class TruncatedPayload(InputError):
    module = "harness"


class OversizedPayload(InputError):
    module = "harness"


class UnknownDtype(InputError):
    module = "harness"


class CorpusFormatError(InputError):
    module = "harness"


class InvalidConfig(ConfigError):
    module = "harness"
