"""
파이프라인 설정 모듈

- ``PipelineConfig``: 모든 기본값을 가진 frozen dataclass. TOML 파일
  (``config/default.toml`` 참고) 에서 읽고, CLI 플래그가 파일 값을 덮어쓴다.
- 환경변수 (``.env`` 지원):
    ADATA_SEED       기본 seed
    ADATA_JOBS       sweep worker 수
    ADATA_LOG_LEVEL  로그 레벨 (기본 WARNING)
"""

from __future__ import annotations

import logging
import os
import tomllib
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from errors import InvalidConfig, InvalidTopK
from selection import parse_k_rule
from tensors import DEFAULT_PROFILES, GranularityProfile

logger = logging.getLogger(__name__)


# 함수로 읽어야 load_dotenv() 이후 값을 가져올 수 있음
def get_default_seed() -> int:
    return _env_int("ADATA_SEED", 0)


def get_default_jobs() -> int:
    return max(1, _env_int("ADATA_JOBS", 1))


def get_log_level() -> str:
    return os.getenv("ADATA_LOG_LEVEL", "WARNING").strip().upper() or "WARNING"


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name, "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        raise InvalidConfig(f"{name}={raw!r} is not an integer") from None


@dataclass(frozen=True)
class PipelineConfig:
    profiles: tuple[GranularityProfile, ...] = DEFAULT_PROFILES
    grid_side: int = 16
    # clustering
    lambda_f: float = 0.5
    saliency_weight: float = 1.0
    max_iter: int = 50
    tol: float = 1e-7
    restarts: int = 1
    # selection
    eta1: float = 1.0
    eta2: float = 1.0
    eta3: float = 1.0
    k_rule: str = "half_beta"
    # objective
    lam: float = 1.0
    lambda_d: float = 0.1
    lambda_t: float = 0.1
    head_lr: float = 0.1
    head_steps: int = 500
    train_projector: bool = False
    # dims
    text_dim: int = 64
    descriptor_dim: int = 32
    hidden_dim: int = 64
    feature_dim: int = 8
    token_dim: int = 64
    # controller
    controller_lr: float = 0.05
    controller_epochs: int = 3000
    items_per_class: int = 200
    # run
    seed: int = 0
    pool_pixel_stream: bool = False
    include_semantic: bool = True

    @property
    def etas(self) -> tuple[float, float, float]:
        return (self.eta1, self.eta2, self.eta3)

    @property
    def lambdas(self) -> tuple[float, float, float]:
        return (self.lambda_d, self.lambda_t, self.lam)

    def validate(self) -> PipelineConfig:
        if len(self.profiles) < 2:
            raise InvalidConfig(f"need >= 2 profiles, got {len(self.profiles)}")
        for p in self.profiles:
            if self.grid_side % p.alpha != 0:
                raise InvalidConfig(
                    f"profile alpha={p.alpha} does not divide grid_side={self.grid_side}"
                )
            if p.gamma >= len(self.profiles):
                raise InvalidConfig(
                    f"profile gamma={p.gamma} outside projector bank of "
                    f"size {len(self.profiles)}"
                )
        try:
            parse_k_rule(self.k_rule)
        except InvalidTopK as exc:
            raise InvalidConfig(str(exc)) from None
        for name in ("lambda_f", "eta1", "eta2", "eta3", "lam", "lambda_d", "lambda_t"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.token_dim != self.text_dim:
            raise InvalidConfig(
                f"token_dim={self.token_dim} must equal text_dim={self.text_dim}"
            )
        for name in ("grid_side", "max_iter", "restarts", "feature_dim", "head_steps"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.tol < 0:
            raise InvalidConfig(f"tol must be >= 0, got {self.tol}")
        return self

    def with_overrides(self, **overrides) -> PipelineConfig:
        """Replace the given fields; None values are ignored."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        unknown = sorted(set(changes) - {f.name for f in fields(self)})
        if unknown:
            raise InvalidConfig(f"unknown config keys: {unknown}")
        if "profiles" in changes:
            changes["profiles"] = parse_profiles(changes["profiles"])
        return replace(self, **changes).validate()

    def to_dict(self) -> dict:
        data = asdict(self)
        data["profiles"] = [p.to_dict() for p in self.profiles]
        return data


def parse_profiles(raw) -> tuple[GranularityProfile, ...]:
    """dict / (a, b, g) triple / GranularityProfile 목록 → profile tuple."""
    profiles = []
    for item in raw:
        if isinstance(item, GranularityProfile):
            profiles.append(item)
        elif isinstance(item, dict):
            profiles.append(
                GranularityProfile(
                    item["alpha"], item["beta"], item.get("gamma", 0), item.get("name", "")
                )
            )
        else:
            alpha, beta, gamma = item
            profiles.append(GranularityProfile(alpha, beta, gamma))
    return tuple(profiles)


def parse_profile_spec(text: str) -> GranularityProfile:
    """'4:5:0' → GranularityProfile(4, 5, 0)."""
    try:
        alpha, beta, gamma = (int(x) for x in text.split(":"))
    except ValueError:
        raise InvalidConfig(f"profile {text!r} is not 'alpha:beta:gamma'") from None
    return GranularityProfile(alpha, beta, gamma)


def from_mapping(data: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    base = base or PipelineConfig()
    known = {f.name for f in fields(PipelineConfig)}
    flat: dict = {}
    for key, value in data.items():
        # TOML tables ([clustering], [selection], ...) are flattened
        if isinstance(value, dict) and key not in known:
            flat.update(value)
        else:
            flat[key] = value
    try:
        return base.with_overrides(**flat)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidConfig):
            raise
        raise InvalidConfig(f"bad config value: {exc}") from None


def from_toml(path: str | Path, base: PipelineConfig | None = None) -> PipelineConfig:
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise InvalidConfig(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfig(f"config file {path} is not valid TOML: {exc}") from None
    logger.info("[Config] loaded %s", path)
    return from_mapping(data, base)


def load_config(path: str | Path | None = None, **overrides) -> PipelineConfig:
    """기본값 ← 환경변수 seed ← config 파일 ← 명시적 override 순으로 적용."""
    config = PipelineConfig(seed=get_default_seed())
    if path is not None:
        config = from_toml(path, config)
    return config.with_overrides(**overrides)
