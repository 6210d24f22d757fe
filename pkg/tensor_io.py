"""
Tensor container 파일 포맷 (reader / writer)

레이아웃 (모두 little-endian):

    magic   8 bytes  b"ADATA\\x00\\x00\\x01"
    dtype   u32      0 = float32
    rank    u32
    dims    rank × u32
    payload Π dims × 4 bytes, row-major

옆에 ``<path>.json`` sidecar 가 붙는다 (name, role, seed, dtype, dims,
token sequence 면 roles 까지). key 는 정렬해서 써서 같은 입력이면 byte 단위로
같은 파일이 나온다.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from controller import SOURCE_EXTERNAL, TextEmbedding
from errors import (
    BadMagic,
    DimensionMismatch,
    OversizedPayload,
    TruncatedPayload,
    UnknownDtype,
)
from tensors import FeatureMap, SaliencyMap, TokenSequence, normalize_mass

logger = logging.getLogger(__name__)

MAGIC = b"ADATA\x00\x00\x01"
DTYPE_FLOAT32 = 0
DTYPE_NAMES = {DTYPE_FLOAT32: "float32"}

ROLE_FEATURES = "features"
ROLE_SALIENCY = "saliency"
ROLE_TEXT_EMBEDDING = "text_embedding"
ROLE_TOKENS = "tokens"
CONTAINER_ROLES = (ROLE_FEATURES, ROLE_SALIENCY, ROLE_TEXT_EMBEDDING, ROLE_TOKENS)

_U32 = struct.Struct("<I")


@dataclass
class TensorContainer:
    data: np.ndarray
    name: str = ""
    role: str = ROLE_FEATURES
    seed: int | None = None
    dtype: int = DTYPE_FLOAT32
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.dtype not in DTYPE_NAMES:
            raise UnknownDtype(f"dtype code {self.dtype} is not supported")
        if self.role not in CONTAINER_ROLES:
            raise DimensionMismatch(f"unknown container role {self.role!r}", module="harness")
        self.data = np.ascontiguousarray(self.data, dtype="<f4")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(int(d) for d in self.data.shape)

    def sidecar(self) -> dict:
        meta = {
            "name": self.name,
            "role": self.role,
            "seed": self.seed,
            "dtype": DTYPE_NAMES[self.dtype],
            "dims": list(self.dims),
        }
        meta.update(self.extra)
        return meta


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


# ---------------------------------------------------------------------------
# Encode / decode
# ---------------------------------------------------------------------------
def encode(container: TensorContainer) -> bytes:
    dims = container.dims
    header = MAGIC + _U32.pack(container.dtype) + _U32.pack(len(dims))
    header += b"".join(_U32.pack(d) for d in dims)
    return header + container.data.tobytes(order="C")


def _read_u32(buf: bytes, offset: int, what: str) -> int:
    if len(buf) < offset + 4:
        raise TruncatedPayload(f"file ends inside the {what} field")
    return _U32.unpack_from(buf, offset)[0]


def decode(buf: bytes) -> tuple[int, np.ndarray]:
    """container bytes → (dtype code, array)."""
    if buf[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"magic field is {buf[: len(MAGIC)]!r}, expected {MAGIC!r}")
    offset = len(MAGIC)
    dtype = _read_u32(buf, offset, "dtype")
    offset += 4
    if dtype not in DTYPE_NAMES:
        raise UnknownDtype(f"dtype field holds unknown code {dtype}")
    rank = _read_u32(buf, offset, "rank")
    offset += 4
    dims = []
    for axis in range(rank):
        dims.append(_read_u32(buf, offset, f"dims[{axis}]"))
        offset += 4
    # python ints: a corrupt header must not wrap around
    expected = 4 * math.prod(dims)
    payload = buf[offset:]
    if len(payload) < expected:
        raise TruncatedPayload(
            f"payload field has {len(payload)} bytes, dims {dims} need {expected}"
        )
    if len(payload) > expected:
        raise OversizedPayload(
            f"payload field has {len(payload)} bytes, dims {dims} need {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return dtype, data


def write_tensor(container: TensorContainer, path: str | Path) -> None:
    path = Path(path)
    path.write_bytes(encode(container))
    sidecar_path(path).write_text(
        json.dumps(container.sidecar(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    logger.info("[IO] wrote %s %s dims=%s", container.role, path, container.dims)


def read_tensor(path: str | Path) -> TensorContainer:
    path = Path(path)
    dtype, data = decode(path.read_bytes())
    meta: dict = {}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text(encoding="utf-8"))
    extra = {
        k: v for k, v in meta.items() if k not in ("name", "role", "seed", "dtype", "dims")
    }
    return TensorContainer(
        data=data,
        name=meta.get("name", path.stem),
        role=meta.get("role", ROLE_FEATURES),
        seed=meta.get("seed"),
        dtype=dtype,
        extra=extra,
    )


# ---------------------------------------------------------------------------
# Typed helpers
# ---------------------------------------------------------------------------
def _expect_role(container: TensorContainer, role: str) -> None:
    if container.role != role:
        raise DimensionMismatch(
            f"expected a {role} container, got {container.role}", module="harness"
        )


def load_features(path: str | Path) -> FeatureMap:
    container = read_tensor(path)
    _expect_role(container, ROLE_FEATURES)
    return FeatureMap(container.data.astype(np.float64))


def load_saliency(path: str | Path) -> np.ndarray:
    """float64 로 다시 합 1 로 맞춘 saliency grid.

    float32 저장으로는 합 1e-9 허용오차를 못 지키므로 raw 질량을 읽어 여기서
    정규화한다.
    """
    container = read_tensor(path)
    _expect_role(container, ROLE_SALIENCY)
    return normalize_mass(container.data.astype(np.float64))


def load_text_embedding(path: str | Path) -> TextEmbedding:
    container = read_tensor(path)
    _expect_role(container, ROLE_TEXT_EMBEDDING)
    return TextEmbedding(container.data.astype(np.float64), source=SOURCE_EXTERNAL)


def features_container(fmap: FeatureMap, name: str = "", seed=None) -> TensorContainer:
    return TensorContainer(fmap.data, name=name, role=ROLE_FEATURES, seed=seed)


def saliency_container(sal: SaliencyMap, name: str = "", seed=None) -> TensorContainer:
    return TensorContainer(sal.data, name=name, role=ROLE_SALIENCY, seed=seed)


def tokens_container(seq: TokenSequence, name: str = "", seed=None) -> TensorContainer:
    return TensorContainer(
        seq.tokens, name=name, role=ROLE_TOKENS, seed=seed, extra={"roles": list(seq.roles)}
    )


def load_tokens(path: str | Path) -> TokenSequence:
    container = read_tensor(path)
    _expect_role(container, ROLE_TOKENS)
    roles = tuple(container.extra.get("roles", ()))
    return TokenSequence(container.data.astype(np.float64), roles)
