"""
Text–granularity 합성 코퍼스 모듈

Controller 지도학습용 (token-id 질문, soft label) 쌍을 만든다.

- class 별 keyword pool: coarse(장면/개수), medium(위치/관계), fine(색/질감/부분).
  n_profiles 가 3 을 넘으면 ``g{c}w{j}`` 형태의 합성 단어 pool 이 추가된다.
- label 은 정답 class 0.8, 나머지는 균등 분배.
- 코퍼스 파일은 한 줄에 한 item: ``<id id id ...>\\t<p1,p2,...,pn>``
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from errors import CorpusFormatError, EmptyCorpus

logger = logging.getLogger(__name__)

TRUE_CLASS_MASS = 0.8
OOV_TOKEN = "<unk>"
EXTRA_POOL_SIZE = 12

OPENERS = ("what", "how", "is", "are", "which", "where", "can", "does")
FILLERS = (
    "the", "a", "in", "this", "image", "picture", "of", "on", "there", "do",
    "you", "see", "it", "to", "photo", "shown",
)  # fmt: skip
NEUTRAL_NOUNS = (
    "dog", "cat", "car", "person", "tree", "man", "woman", "table", "chair",
    "bird", "horse", "bus", "boy", "girl", "cup", "house",
)  # fmt: skip

COARSE_WORDS = (
    "scene", "overall", "animals", "objects", "many", "count", "everything",
    "total", "whole", "environment", "place", "setting", "people", "number",
)  # fmt: skip
MEDIUM_WORDS = (
    "left", "right", "holding", "near", "doing", "wearing", "next", "between",
    "region", "area", "side", "behind", "front", "above",
)  # fmt: skip
FINE_WORDS = (
    "color", "texture", "ear", "eye", "pattern", "material", "shape", "logo",
    "text", "button", "stripe", "surface", "letter", "tail",
)  # fmt: skip

BASE_POOLS = (COARSE_WORDS, MEDIUM_WORDS, FINE_WORDS)

VOCABULARY: tuple[str, ...] = (
    (OOV_TOKEN,)
    + OPENERS
    + FILLERS
    + NEUTRAL_NOUNS
    + COARSE_WORDS
    + MEDIUM_WORDS
    + FINE_WORDS
)
WORD_TO_ID: dict[str, int] = {w: i for i, w in enumerate(VOCABULARY)}
OOV_ID = WORD_TO_ID[OOV_TOKEN]


@dataclass(frozen=True)
class CorpusItem:
    token_ids: tuple[int, ...]
    label: np.ndarray


@dataclass(frozen=True)
class GranularityCorpus:
    items: tuple[CorpusItem, ...]

    def __post_init__(self) -> None:
        widths = {item.label.shape[0] for item in self.items}
        if len(widths) > 1:
            raise CorpusFormatError(f"labels have mixed lengths: {sorted(widths)}")
        for item in self.items:
            if np.any(item.label < 0) or abs(float(item.label.sum()) - 1.0) > 1e-9:
                raise CorpusFormatError(
                    f"label {item.label.tolist()} must be non-negative and sum to 1"
                )

    def __len__(self) -> int:
        return len(self.items)

    @property
    def n_profiles(self) -> int:
        if not self.items:
            raise EmptyCorpus("corpus has no items")
        return self.items[0].label.shape[0]

    def labels(self) -> np.ndarray:
        return np.stack([item.label for item in self.items])

    def hard_labels(self) -> np.ndarray:
        return np.argmax(self.labels(), axis=1)


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------
def class_pools(n_profiles: int) -> list[tuple[str, ...]]:
    """class 별 keyword pool (coarse → fine 순)."""
    if n_profiles == 2:
        return [COARSE_WORDS, FINE_WORDS]
    pools = list(BASE_POOLS[:n_profiles])
    for c in range(len(pools), n_profiles):
        pools.append(tuple(f"g{c}w{j}" for j in range(EXTRA_POOL_SIZE)))
    return pools


def word_id(word: str) -> int:
    """vocabulary id. synthetic ``g{c}w{j}`` 단어는 기본 테이블 뒤쪽 id 를 받는다."""
    if word in WORD_TO_ID:
        return WORD_TO_ID[word]
    match = re.fullmatch(r"g(\d+)w(\d+)", word)
    if match:
        c, j = int(match.group(1)), int(match.group(2))
        if c >= len(BASE_POOLS) and j < EXTRA_POOL_SIZE:
            return len(VOCABULARY) + (c - len(BASE_POOLS)) * EXTRA_POOL_SIZE + j
    return OOV_ID


def tokenize_question(text: str) -> list[int]:
    """소문자화, 구두점과 소유격 's 제거 후 vocabulary id 로 변환."""
    cleaned = re.sub(r"'s\b", "", text.lower())
    words = re.findall(r"[a-z0-9]+", cleaned)
    return [word_id(w) for w in words]


def parse_token_list(raw: str) -> list[int]:
    """'3,5,7' or '3 5 7' → [3, 5, 7]."""
    parts = [p for p in re.split(r"[,\s]+", raw.strip()) if p]
    try:
        ids = [int(p) for p in parts]
    except ValueError:
        raise CorpusFormatError(f"token list {raw!r} is not integers") from None
    if any(i < 0 for i in ids):
        raise CorpusFormatError(f"token ids must be non-negative: {raw!r}")
    return ids


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------
def soft_label(true_class: int, n_profiles: int) -> np.ndarray:
    rest = (1.0 - TRUE_CLASS_MASS) / (n_profiles - 1)
    label = np.full(n_profiles, rest)
    label[true_class] = TRUE_CLASS_MASS
    return label


def _make_question(rng: np.random.Generator, pool: tuple[str, ...]) -> list[str]:
    length = int(rng.integers(4, 8))
    n_keywords = 2 if rng.random() < 0.7 else 1
    keywords = [pool[i] for i in rng.choice(len(pool), size=n_keywords, replace=False)]
    background = FILLERS + NEUTRAL_NOUNS
    n_background = length - 1 - n_keywords
    picks = rng.integers(len(background), size=n_background)
    body = [background[i] for i in picks]
    body += keywords
    order = rng.permutation(len(body))
    opener = OPENERS[int(rng.integers(len(OPENERS)))]
    return [opener] + [body[i] for i in order]


def make_synthetic_corpus(
    n_profiles: int, items_per_class: int, seed: int
) -> GranularityCorpus:
    if n_profiles < 2:
        raise EmptyCorpus(f"need at least 2 profiles, got {n_profiles}")
    if items_per_class < 1:
        raise EmptyCorpus(f"items_per_class must be >= 1, got {items_per_class}")
    rng = np.random.default_rng(seed)
    pools = class_pools(n_profiles)
    items = []
    for c, pool in enumerate(pools):
        label = soft_label(c, n_profiles)
        for _ in range(items_per_class):
            ids = tuple(word_id(w) for w in _make_question(rng, pool))
            items.append(CorpusItem(token_ids=ids, label=label.copy()))
    logger.info(
        "[Corpus] generated %d items over %d classes (seed=%d)",
        len(items),
        n_profiles,
        seed,
    )
    return GranularityCorpus(tuple(items))


# ---------------------------------------------------------------------------
# Corpus file IO
# ---------------------------------------------------------------------------
def format_corpus_line(item: CorpusItem) -> str:
    ids = " ".join(str(i) for i in item.token_ids)
    probs = ",".join(repr(float(p)) for p in item.label)
    return f"{ids}\t{probs}"


def parse_corpus_line(line: str, lineno: int = 0) -> CorpusItem:
    try:
        ids_part, probs_part = line.rstrip("\n").split("\t")
    except ValueError:
        raise CorpusFormatError(f"line {lineno}: expected '<ids>\\t<probs>'") from None
    try:
        ids = tuple(int(x) for x in ids_part.split())
        probs = np.array([float(x) for x in probs_part.split(",")], dtype=np.float64)
    except ValueError:
        raise CorpusFormatError(f"line {lineno}: non-numeric field") from None
    if not ids:
        raise CorpusFormatError(f"line {lineno}: empty token list")
    if any(i < 0 for i in ids):
        raise CorpusFormatError(f"line {lineno}: negative token id")
    return CorpusItem(token_ids=ids, label=probs)


def write_corpus(corpus: GranularityCorpus, path: str | Path) -> None:
    lines = [format_corpus_line(item) for item in corpus.items]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_corpus(path: str | Path) -> GranularityCorpus:
    text = Path(path).read_text(encoding="utf-8")
    items = [
        parse_corpus_line(line, lineno)
        for lineno, line in enumerate(text.splitlines(), start=1)
        if line.strip()
    ]
    if not items:
        raise EmptyCorpus(f"corpus file {path} has no items")
    return GranularityCorpus(tuple(items))
