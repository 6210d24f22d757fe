"""
공용 fixture

- rng: 테스트마다 새로 만드는 고정 seed Generator
- planted_scene: 16×16, 3 blob, C=8 기본 scene
- trained_params: 기본 설정으로 학습한 Controller (session 공유, 수정 금지)
"""

import numpy as np
import pytest

import controller as ctl
from config import PipelineConfig
from scenes import generate_scene


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def planted_scene():
    return generate_scene(3, 16, 8, seed=0)


@pytest.fixture(scope="session")
def trained_params():
    return ctl.default_controller()


@pytest.fixture
def config():
    return PipelineConfig()


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    """.env 나 셸의 ADATA_* 값이 테스트 기대값을 바꾸지 않도록"""
    for name in ("ADATA_SEED", "ADATA_JOBS", "ADATA_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
