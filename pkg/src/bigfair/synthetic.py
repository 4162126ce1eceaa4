"""Synthetic click-log generator.

A desk-scale surrogate for a news click dataset with the ingredients the
cold-user study needs: topical news, users with Dirichlet interest mixtures,
a small cold-user population (default 11%), heavy users with log-normal
history lengths, and train/eval impressions disjoint by time index. Clicks
follow a softmax choice model over the slate: the score of a slate item is
the user's interest in its topic divided by a temperature, and a small
uniform noise floor keeps every item clickable.

A fraction of the news pool can be reserved for evaluation slates only, so
eval candidates are titles the model never saw during training - the
generalization pressure that separates well-estimated heavy users from
noisy cold ones.

Everything derives from `master_seed` through the named streams in
`bigfair.rng`; a fixed config yields a byte-identical corpus.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod
from .datatypes import (
    Datasets,
    EvalImpression,
    NewsItem,
    NewsStore,
    TrainingSample,
    UserRecord,
    classify_user,
    COLD,
    pad_title,
    round_half_away,
)


@dataclass
class SyntheticConfig:
    num_users: int = 10_000
    num_news: int = 3_000
    num_topics: int = 16
    vocab_size: int = 2_000
    topic_token_concentration: float = 0.05
    user_interest_concentration: float = 0.25
    cold_fraction: float = 0.11
    heavy_history_mu: float = 2.3  # log-normal parameters, in items
    heavy_history_sigma: float = 0.6
    slate_size: int = 10
    click_noise: float = 0.05
    master_seed: int = 0
    # corpus-shape knobs beyond the core generative story
    cold_threshold: int = 5
    max_history_len: int = 50
    max_title_len: int = 30
    title_min_tokens: int = 6
    title_max_tokens: int = 14
    train_impressions_rate: float = 0.8  # train impressions per history item
    eval_impressions_per_user: int = 3
    eval_news_fraction: float = 0.25  # news reserved for eval slates
    negatives_per_positive: int = 4
    interest_temperature: float = 0.5

    def validate(self) -> None:
        if self.num_users < 1 or self.num_news < 2 or self.num_topics < 1:
            raise ValueError("num_users, num_news, num_topics must be positive")
        if self.vocab_size < 3:
            raise ValueError("vocab_size must be at least 3 (pad + oov + tokens)")
        if not 0.0 < self.cold_fraction < 1.0:
            raise ValueError(f"cold_fraction must be in (0,1), got {self.cold_fraction}")
        if self.slate_size < 2:
            raise ValueError("slate_size must be at least 2")
        if self.slate_size > self.num_news:
            raise ValueError(
                f"slate_size {self.slate_size} exceeds num_news {self.num_news}"
            )
        if not 0.0 <= self.eval_news_fraction < 1.0:
            raise ValueError("eval_news_fraction must be in [0, 1)")
        eval_pool = round_half_away(self.eval_news_fraction * self.num_news)
        if self.eval_news_fraction > 0 and eval_pool < self.slate_size:
            raise ValueError(
                "eval news pool smaller than slate_size; raise eval_news_fraction"
            )
        if self.num_news - eval_pool < self.slate_size:
            raise ValueError("train news pool smaller than slate_size")
        if not 1 <= self.title_min_tokens <= self.title_max_tokens <= self.max_title_len:
            raise ValueError("title token range must fit within max_title_len")
        if not 0.0 <= self.click_noise <= 1.0:
            raise ValueError("click_noise must be in [0, 1]")
        if self.cold_threshold >= self.max_history_len:
            raise ValueError("cold_threshold must be below max_history_len")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be at least 1")
        if self.interest_temperature <= 0:
            raise ValueError("interest_temperature must be positive")


@dataclass
class Corpus:
    news: list[NewsItem]
    users: list[UserRecord]
    train_impressions: list[EvalImpression]
    eval_impressions: list[EvalImpression]
    train_samples: list[TrainingSample]
    vocab: dict[str, int]
    stats: dict = field(default_factory=dict)

    def datasets(self, max_title_len: int | None = None) -> Datasets:
        if max_title_len is None:
            max_title_len = self.stats["title_budget"]
        store = NewsStore(self.news, self.vocab, max_title_len)
        return Datasets(
            news=store,
            users=self.users,
            train_samples=self.train_samples,
            eval_impressions=self.eval_impressions,
            stats=dict(self.stats),
        )


def _click_column(interest: np.ndarray, topic_rows: np.ndarray, cfg: SyntheticConfig,
                  us: np.ndarray) -> np.ndarray:
    """Vectorised choice over each slate row given per-row uniforms."""
    logits = interest[topic_rows] / cfg.interest_temperature
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    p = (1.0 - cfg.click_noise) * p + cfg.click_noise / topic_rows.shape[1]
    cdf = np.cumsum(p, axis=1)
    # first index whose cdf weight reaches the uniform draw
    idx = (cdf < us[:, None] * cdf[:, -1:]).sum(axis=1)
    return np.minimum(idx, topic_rows.shape[1] - 1)


def generate_corpus(cfg: SyntheticConfig) -> Corpus:
    cfg.validate()
    gd = rng_mod.stream(cfg.master_seed, "data")
    gs = rng_mod.stream(cfg.master_seed, "sampling")

    usable_vocab = cfg.vocab_size - 2  # ids 0 and 1 are reserved
    vocab = {f"t{i}": i for i in range(2, cfg.vocab_size)}

    # topic language models: one Dirichlet token distribution per topic
    topic_cdfs = np.empty((cfg.num_topics, usable_vocab))
    for t in range(cfg.num_topics):
        topic_cdfs[t] = np.cumsum(gd.dirichlet(cfg.topic_token_concentration, usable_vocab))

    news: list[NewsItem] = []
    topics = np.empty(cfg.num_news, dtype=np.int64)
    for i in range(cfg.num_news):
        topic = gd.randint(cfg.num_topics)
        topics[i] = topic
        length = cfg.title_min_tokens + gd.randint(
            cfg.title_max_tokens - cfg.title_min_tokens + 1
        )
        draws = gd.uniforms(length) * topic_cdfs[topic, -1]
        ids = np.searchsorted(topic_cdfs[topic], draws, side="right")
        ids = np.minimum(ids, usable_vocab - 1) + 2
        news.append(NewsItem(f"N{i:06d}", pad_title(ids.tolist(), cfg.max_title_len), topic))

    # the tail of the news pool is reserved for eval slates (fresh titles)
    eval_pool_size = round_half_away(cfg.eval_news_fraction * cfg.num_news)
    train_pool = cfg.num_news - eval_pool_size
    eval_lo = train_pool if eval_pool_size > 0 else 0
    eval_span = cfg.num_news - eval_lo

    users: list[UserRecord] = []
    train_impressions: list[EvalImpression] = []
    eval_impressions: list[EvalImpression] = []
    train_samples: list[TrainingSample] = []
    n_cold = 0
    clock = 0  # global time index; train events precede all eval events

    per_user_eval: list[tuple[UserRecord, np.ndarray, np.ndarray]] = []

    for u in range(cfg.num_users):
        interest = gd.dirichlet(cfg.user_interest_concentration, cfg.num_topics)
        is_cold = gd.uniform() < cfg.cold_fraction
        if is_cold:
            n_hist = 1 + gd.randint(cfg.cold_threshold)
        else:
            raw = gd.lognormal(cfg.heavy_history_mu, cfg.heavy_history_sigma)
            n_hist = int(np.clip(round_half_away(raw), cfg.cold_threshold + 1,
                                 cfg.max_history_len))
        n_train = max(1, round_half_away(cfg.train_impressions_rate * n_hist))
        n_eval = cfg.eval_impressions_per_user

        n_slates = n_hist + n_train + n_eval
        row_base = np.where(np.arange(n_slates) < n_hist + n_train, 0, eval_lo)
        row_span = np.where(np.arange(n_slates) < n_hist + n_train,
                            train_pool, eval_span)

        slate_draws = gd.uniforms(n_slates * cfg.slate_size).reshape(
            n_slates, cfg.slate_size)
        slates = row_base[:, None] + (slate_draws * row_span[:, None]).astype(np.int64)
        # a slate never shows the same article twice: redraw any row with a
        # repeat until all rows hold distinct items (uniform over such rows)
        while True:
            in_order = np.sort(slates, axis=1)
            bad = np.flatnonzero((in_order[:, 1:] == in_order[:, :-1]).any(axis=1))
            if bad.size == 0:
                break
            redraw = gd.uniforms(bad.size * cfg.slate_size).reshape(
                bad.size, cfg.slate_size)
            slates[bad] = row_base[bad, None] + (
                redraw * row_span[bad, None]).astype(np.int64)

        click_draws = gd.uniforms(n_slates)
        clicks = _click_column(interest, topics[slates], cfg, click_draws)

        history = [f"N{slates[i, clicks[i]]:06d}" for i in range(n_hist)]
        user = UserRecord(f"U{u:06d}", history)
        users.append(user)
        if classify_user(n_hist, cfg.cold_threshold) == COLD:
            n_cold += 1

        for s in range(n_hist, n_hist + n_train):
            cand = [f"N{j:06d}" for j in slates[s]]
            labels = [0] * cfg.slate_size
            labels[clicks[s]] = 1
            train_impressions.append(
                EvalImpression(user, cand, labels,
                               impression_id=f"I{len(train_impressions):07d}",
                               time=str(clock))
            )
            clock += 1

        per_user_eval.append((user, slates[n_hist + n_train:], clicks[n_hist + n_train:]))

    # eval impressions carry later time indices than every train impression
    for user, slates_e, clicks_e in per_user_eval:
        for s in range(slates_e.shape[0]):
            cand = [f"N{j:06d}" for j in slates_e[s]]
            labels = [0] * cfg.slate_size
            labels[clicks_e[s]] = 1
            eval_impressions.append(
                EvalImpression(user, cand, labels,
                               impression_id=f"E{len(eval_impressions):07d}",
                               time=str(clock))
            )
            clock += 1

    # training samples: each click paired with sampled same-slate negatives
    k = cfg.negatives_per_positive
    for imp in train_impressions:
        pos = imp.candidates[imp.labels.index(1)]
        negatives = [nid for nid, lab in zip(imp.candidates, imp.labels) if lab == 0]
        if len(negatives) >= k:
            chosen = [negatives[i] for i in gs.sample(len(negatives), k)]
        else:
            chosen = [negatives[gs.randint(len(negatives))] for _ in range(k)]
        train_samples.append(
            TrainingSample(imp.user, [pos] + chosen, 0, impression_id=imp.impression_id)
        )

    lengths = [len(u.history) for u in users]
    stats = {
        "num_users": cfg.num_users,
        "num_news": cfg.num_news,
        "cold_ratio": n_cold / cfg.num_users,
        "avg_history_len": float(np.mean(lengths)),
        "max_history_len": int(np.max(lengths)),
        "train_impressions": len(train_impressions),
        "eval_impressions": len(eval_impressions),
        "train_samples": len(train_samples),
        "eval_news_pool": eval_span if eval_pool_size > 0 else cfg.num_news,
        "title_budget": cfg.max_title_len,
    }
    return Corpus(news, users, train_impressions, eval_impressions, train_samples,
                  vocab, stats)
