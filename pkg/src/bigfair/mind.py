"""MIND-layout TSV ingestion and serialization.

news file columns (tab-separated, no header):
    id, category, subcategory, title, abstract, url, title-entities, abstract-entities
behaviors file columns:
    impression id, user id, time, space-separated history ids,
    space-separated "newsid-label" pairs

Titles are tokenized by a frozen rule: lowercase, split on anything that is
not a-z or 0-9. The vocabulary is built from the news file of the training
split in first-occurrence order, starting at id 2 (0 is pad, 1 is OOV).
Histories keep the most recent max_history_len clicks.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .datatypes import (
    DEFAULT_MAX_HISTORY_LEN,
    DEFAULT_MAX_TITLE_LEN,
    EvalImpression,
    NewsItem,
    TrainingSample,
    UserRecord,
    OOV_ID,
    pad_title,
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class ParseError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def build_vocab(token_lists) -> dict[str, int]:
    """First-occurrence vocabulary over an iterable of token lists."""
    vocab: dict[str, int] = {}
    next_id = 2
    for tokens in token_lists:
        for tok in tokens:
            if tok not in vocab:
                vocab[tok] = next_id
                next_id += 1
    return vocab


def parse_mind_news(
    path,
    vocab: dict[str, int] | None = None,
    max_title_len: int = DEFAULT_MAX_TITLE_LEN,
) -> tuple[list[NewsItem], dict[str, int]]:
    """Parse a news TSV. With vocab=None the vocabulary is built from this
    file (it is the training split); otherwise unknown tokens map to OOV.
    """
    rows: list[tuple[str, list[str], int | None]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) < 4:
                raise ParseError(
                    f"{path}: line {lineno}: expected >=4 tab-separated fields, "
                    f"got {len(fields)}"
                )
            # synthetic corpora encode their topic as the category "topic<N>"
            m = re.fullmatch(r"topic(\d+)", fields[1])
            topic_id = int(m.group(1)) if m else None
            rows.append((fields[0], tokenize(fields[3]), topic_id))
    if vocab is None:
        vocab = build_vocab(tokens for _, tokens, _ in rows)
    items = []
    for news_id, tokens, topic_id in rows:
        ids = [vocab.get(tok, OOV_ID) for tok in tokens]
        items.append(NewsItem(news_id, pad_title(ids, max_title_len), topic_id))
    return items, vocab


@dataclass
class ParseReport:
    lines: int = 0
    impressions_kept: int = 0
    impressions_skipped_single_class: int = 0
    unknown_history_ids: int = 0
    unknown_impression_ids: int = 0
    samples: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class BehaviorData:
    users: list[UserRecord] = field(default_factory=list)
    samples: list[TrainingSample] = field(default_factory=list)
    impressions: list[EvalImpression] = field(default_factory=list)
    report: ParseReport = field(default_factory=ParseReport)


def parse_mind_behaviors(
    path,
    news,
    rng,
    k: int = 4,
    max_history_len: int = DEFAULT_MAX_HISTORY_LEN,
) -> BehaviorData:
    """Parse a behaviors TSV against a known news set.

    Unknown news ids are dropped and counted (histories shrink, impression
    items vanish); a line that ends up without both a positive and a
    negative yields neither an impression nor samples. Training samples
    pair each clicked item with k non-clicked items from the same line,
    sampled without replacement when possible, else with replacement.
    MIND logs may repeat a user id with a different history snapshot, so
    user records are deduplicated by (user id, history).
    """
    out = BehaviorData()
    seen_users: dict[tuple, UserRecord] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 5:
                raise ParseError(
                    f"{path}: line {lineno}: expected 5 tab-separated fields, "
                    f"got {len(fields)}"
                )
            imp_id, user_id, time_str, hist_field, pairs_field = fields
            out.report.lines += 1

            history = []
            for nid in hist_field.split():
                if nid in news:
                    history.append(nid)
                else:
                    out.report.unknown_history_ids += 1
            history = history[-max_history_len:]

            key = (user_id, tuple(history))
            user = seen_users.get(key)
            if user is None:
                user = UserRecord(user_id, history)
                seen_users[key] = user
                out.users.append(user)

            candidates: list[str] = []
            labels: list[int] = []
            for pair in pairs_field.split():
                nid, sep, label = pair.rpartition("-")
                if not sep or label not in ("0", "1"):
                    raise ParseError(
                        f"{path}: line {lineno}: malformed item-label pair {pair!r}"
                    )
                if nid not in news:
                    out.report.unknown_impression_ids += 1
                    continue
                candidates.append(nid)
                labels.append(int(label))

            if not (0 < sum(labels) < len(labels)):
                out.report.impressions_skipped_single_class += 1
                continue

            out.impressions.append(
                EvalImpression(user, candidates, labels, impression_id=imp_id, time=time_str)
            )
            out.report.impressions_kept += 1

            negatives = [nid for nid, lab in zip(candidates, labels) if lab == 0]
            for nid, lab in zip(candidates, labels):
                if lab != 1:
                    continue
                if len(negatives) >= k:
                    chosen = [negatives[i] for i in rng.sample(len(negatives), k)]
                else:
                    chosen = [negatives[rng.randint(len(negatives))] for _ in range(k)]
                out.samples.append(
                    TrainingSample(user, [nid] + chosen, 0, impression_id=imp_id)
                )
                out.report.samples += 1
    return out


# ---------------------------------------------------------------------------
# serialization (round-trip partner of the parsers; also the gen-data writer)


def write_news(items: list[NewsItem], vocab: dict[str, int], path) -> None:
    """Write news TSV with titles rendered through the inverted vocabulary."""
    inverse = {tid: tok for tok, tid in vocab.items()}
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            words = []
            for tid in item.token_ids:
                if tid == 0:
                    break
                words.append(inverse.get(tid, "oov"))
            topic = f"topic{item.topic_id}" if item.topic_id is not None else "none"
            fh.write(
                f"{item.news_id}\t{topic}\t{topic}\t{' '.join(words)}\t\t\t\t\n"
            )


def write_behaviors(impressions: list[EvalImpression], path) -> None:
    """Write behaviors TSV, one line per impression."""
    with open(path, "w", encoding="utf-8") as fh:
        for imp in impressions:
            hist = " ".join(imp.user.history)
            pairs = " ".join(
                f"{nid}-{lab}" for nid, lab in zip(imp.candidates, imp.labels)
            )
            fh.write(
                f"{imp.impression_id}\t{imp.user.user_id}\t{imp.time}\t{hist}\t{pairs}\n"
            )
