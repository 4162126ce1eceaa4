"""Core record types shared by the data pipeline, trainer, and evaluator.

News titles are fixed-length token-id lists (pad id 0, OOV id 1, pads only
as a suffix). Users are classified cold when their click history holds at
most `cold_threshold` items; the complement is heavy. Behavior dropping,
the augmentation behind the self-distillation student branch, removes an
exact count of history positions chosen uniformly at random.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PAD_ID = 0
OOV_ID = 1
DEFAULT_COLD_THRESHOLD = 5
DEFAULT_MAX_TITLE_LEN = 30
DEFAULT_MAX_HISTORY_LEN = 50

COLD = "cold"
HEAVY = "heavy"


def round_half_away(x: float) -> int:
    """round() with halves away from zero, platform-independent."""
    if x < 0:
        return -round_half_away(-x)
    return math.floor(x + 0.5)


def classify_user(history_len: int, cold_threshold: int = DEFAULT_COLD_THRESHOLD) -> str:
    """COLD iff the user has at most cold_threshold historical clicks."""
    if history_len < 0:
        raise ValueError(f"history length cannot be negative, got {history_len}")
    return COLD if history_len <= cold_threshold else HEAVY


def drop_behaviors(history: list[str], p: float, rng) -> list[str]:
    """Drop round(p*N) history entries at positions chosen uniformly at
    random without replacement, keeping at least one and preserving order.

    This is the augmentation that builds the student view: an exact-count
    drop rather than per-item coin flips, so the augmented length is a
    deterministic function of (N, p).
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"drop ratio must be in [0, 1], got {p}")
    n = len(history)
    if n == 0:
        raise ValueError("cannot drop behaviors from an empty history")
    kept_count = max(1, n - round_half_away(p * n))
    d = n - kept_count
    if d == 0:
        return list(history)
    dropped = set(rng.sample(n, d))
    return [item for i, item in enumerate(history) if i not in dropped]


def pad_title(token_ids: list[int], max_title_len: int = DEFAULT_MAX_TITLE_LEN) -> list[int]:
    """Truncate/pad a token-id list to exactly max_title_len."""
    clipped = list(token_ids[:max_title_len])
    return clipped + [PAD_ID] * (max_title_len - len(clipped))


@dataclass
class NewsItem:
    news_id: str
    token_ids: list[int]
    topic_id: int | None = None  # synthetic corpora only

    def true_length(self) -> int:
        n = len(self.token_ids)
        while n > 0 and self.token_ids[n - 1] == PAD_ID:
            n -= 1
        return n


@dataclass
class UserRecord:
    user_id: str
    history: list[str]  # news ids, oldest first

    def activeness(self, cold_threshold: int = DEFAULT_COLD_THRESHOLD) -> str:
        return classify_user(len(self.history), cold_threshold)


@dataclass
class TrainingSample:
    user: UserRecord
    candidates: list[str]  # length 1 + K, exactly one positive
    positive_index: int
    impression_id: str


@dataclass
class EvalImpression:
    user: UserRecord
    candidates: list[str]
    labels: list[int]
    impression_id: str = ""
    time: str = ""

    def is_auc_eligible(self) -> bool:
        return 0 < sum(self.labels) < len(self.labels)


class NewsStore:
    """Immutable lookup from news id to token rows, used everywhere a batch
    of titles must be assembled quickly. Row order is insertion order.
    """

    def __init__(self, items: list[NewsItem], vocab: dict[str, int],
                 max_title_len: int = DEFAULT_MAX_TITLE_LEN):
        self.vocab = vocab
        self.max_title_len = max_title_len
        self.items: dict[str, NewsItem] = {}
        rows = []
        lengths = []
        for item in items:
            if len(item.token_ids) != max_title_len:
                raise ValueError(
                    f"news {item.news_id}: title length {len(item.token_ids)} "
                    f"!= max_title_len {max_title_len}"
                )
            if item.news_id in self.items:
                raise ValueError(f"duplicate news id {item.news_id}")
            self.items[item.news_id] = item
            rows.append(item.token_ids)
            lengths.append(item.true_length())
        self.row_of = {nid: i for i, nid in enumerate(self.items)}
        self.tokens = np.asarray(rows, dtype=np.int32).reshape(len(items), max_title_len)
        self.lengths = np.asarray(lengths, dtype=np.int32)

    @property
    def vocab_size(self) -> int:
        # ids 0 (pad) and 1 (oov) are reserved below the real tokens
        return (max(self.vocab.values()) + 1) if self.vocab else 2

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, news_id: str) -> bool:
        return news_id in self.items

    def rows_for(self, news_ids: list[str]) -> np.ndarray:
        return np.array([self.row_of[nid] for nid in news_ids], dtype=np.int64)


@dataclass
class Datasets:
    """Everything one training run consumes."""

    news: NewsStore
    users: list[UserRecord]
    train_samples: list[TrainingSample]
    eval_impressions: list[EvalImpression]
    stats: dict = field(default_factory=dict)
