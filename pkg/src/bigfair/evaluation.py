"""AUC evaluation, activity-stratified reports, and the unfairness metric.

AUC is computed per impression and averaged within each stratum (overall,
cold, heavy, and history-length buckets); this keeps every impression at
equal weight, so overall is exactly the impression-count-weighted mean of
the cold and heavy values. A pooled variant over all impressions at once
exists behind a flag for sensitivity checks.

The unfairness score compares two checkpoints of one training run: the one
best on overall AUC and the one best on cold-user AUC. It is the cold-user
AUC gap between them, in AUC x 100 points, and is nonnegative by
construction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .datatypes import COLD, EvalImpression, NewsStore, classify_user
from .model import ModelParams, encode_news_batch, encode_user_batch

HISTORY_BUCKETS = (
    ("0-5", 0, 5),
    ("6-10", 6, 10),
    ("11-20", 11, 20),
    ("21-50", 21, 50),
    (">50", 51, None),
)


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative,
    ties counted one half. Rank-sum implementation, O(n log n)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores {s.shape} and labels {y.shape} must be equal 1-D")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos + n_neg != y.size:
        raise ValueError("labels must be 0/1")
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    pos_rank_sum = float(ranks[y == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass
class EvalReport:
    overall_auc: float
    heavy_auc: float | None
    cold_auc: float | None
    bucket_auc: dict[str, float | None]
    counts: dict[str, int]
    pooled_auc: float | None = None


@dataclass
class UnfairnessResult:
    best_overall_step: int
    best_cold_step: int
    cold_auc_at_best_overall: float
    cold_auc_at_best_cold: float
    unfairness: float  # AUC x 100 points


def _bucket_of(history_len: int) -> str:
    for name, lo, hi in HISTORY_BUCKETS:
        if history_len >= lo and (hi is None or history_len <= hi):
            return name
    raise AssertionError(f"no bucket for history length {history_len}")


def _mean(values: list[float]) -> float | None:
    if not values:
        return None
    return math.fsum(values) / len(values)


def _encode_unique_news(params: ModelParams, store: NewsStore,
                        news_ids: list[str], chunk: int) -> tuple[dict[str, int], np.ndarray]:
    """Eval-mode vectors for each unique news id, one chunked pass."""
    rows = store.rows_for(news_ids)
    mat = np.empty((len(news_ids), params.cfg.hidden_dim))
    for lo in range(0, len(news_ids), chunk):
        sel = rows[lo:lo + chunk]
        tokens = store.tokens[sel]
        max_len = int(store.lengths[sel].max())
        mat[lo:lo + len(sel)] = encode_news_batch(
            params, tokens[:, :max_len]).data
    return {nid: i for i, nid in enumerate(news_ids)}, mat


def _encode_unique_users(params: ModelParams, histories: list[list[str]],
                         news_row: dict[str, int], news_mat: np.ndarray,
                         chunk: int) -> np.ndarray:
    """Eval-mode user vectors for deduplicated histories.

    Histories are processed in length order so each chunk carries little
    padding; results are written back to the caller's order.
    """
    from . import autodiff as ad

    d = params.cfg.hidden_dim
    out = np.empty((len(histories), d))
    order = sorted(range(len(histories)), key=lambda i: len(histories[i]))
    empty_vec = params["empty_history"].data
    pos = 0
    while pos < len(order) and len(histories[order[pos]]) == 0:
        out[order[pos]] = empty_vec
        pos += 1
    while pos < len(order):
        sel = order[pos:pos + chunk]
        max_len = len(histories[sel[-1]])
        hist_rows = np.zeros((len(sel), max_len), dtype=np.int64)
        mask = np.zeros((len(sel), max_len), dtype=bool)
        for r, i in enumerate(sel):
            h = histories[i]
            hist_rows[r, :len(h)] = [news_row[nid] for nid in h]
            mask[r, :len(h)] = True
        vecs = encode_user_batch(params, ad.constant(news_mat[hist_rows]), mask)
        for r, i in enumerate(sel):
            out[i] = vecs.data[r]
        pos += len(sel)
    return out


def evaluate(params: ModelParams, impressions: list[EvalImpression],
             store: NewsStore, cold_threshold: int = 5,
             include_pooled: bool = False, chunk: int = 1024) -> EvalReport:
    """Score every AUC-eligible impression and aggregate per stratum.

    News and user encodings are computed once per unique title / unique
    (user, history) pair; results are independent of impression order.
    """
    eligible = [imp for imp in impressions if imp.is_auc_eligible()]
    skipped = len(impressions) - len(eligible)
    if not eligible:
        raise ValueError("no AUC-eligible impressions to evaluate")

    unique_news: dict[str, None] = {}
    unique_users: dict[tuple, int] = {}
    histories: list[list[str]] = []
    for imp in eligible:
        key = (imp.user.user_id, tuple(imp.user.history))
        if key not in unique_users:
            unique_users[key] = len(histories)
            histories.append(list(imp.user.history))
            for nid in imp.user.history:
                unique_news.setdefault(nid)
        for nid in imp.candidates:
            unique_news.setdefault(nid)

    news_row, news_mat = _encode_unique_news(params, store, list(unique_news), chunk)
    user_mat = _encode_unique_users(params, histories, news_row, news_mat, chunk)

    w = params["score_proj"].data
    news_proj = news_mat @ w
    user_proj = user_mat @ w

    per_stratum: dict[str, list[float]] = {"overall": [], COLD: [], "heavy": []}
    bucket_aucs: dict[str, list[float]] = {name: [] for name, _, _ in HISTORY_BUCKETS}
    counts: dict[str, int] = {name: 0 for name, _, _ in HISTORY_BUCKETS}
    pooled_scores: list[np.ndarray] = []
    pooled_labels: list[np.ndarray] = []

    for imp in eligible:
        urow = unique_users[(imp.user.user_id, tuple(imp.user.history))]
        cand_rows = [news_row[nid] for nid in imp.candidates]
        scores = news_proj[cand_rows] @ user_proj[urow]
        value = auc(scores, imp.labels)
        hist_len = len(imp.user.history)
        per_stratum["overall"].append(value)
        per_stratum[classify_user(hist_len, cold_threshold)].append(value)
        bucket = _bucket_of(hist_len)
        bucket_aucs[bucket].append(value)
        counts[bucket] += 1
        if include_pooled:
            pooled_scores.append(scores)
            pooled_labels.append(np.asarray(imp.labels))

    counts["overall"] = len(per_stratum["overall"])
    counts["cold"] = len(per_stratum[COLD])
    counts["heavy"] = len(per_stratum["heavy"])
    counts["skipped_single_class"] = skipped

    pooled = None
    if include_pooled:
        pooled = auc(np.concatenate(pooled_scores), np.concatenate(pooled_labels))

    return EvalReport(
        overall_auc=_mean(per_stratum["overall"]),
        heavy_auc=_mean(per_stratum["heavy"]),
        cold_auc=_mean(per_stratum[COLD]),
        bucket_auc={name: _mean(vals) for name, vals in bucket_aucs.items()},
        counts=counts,
        pooled_auc=pooled,
    )


def unfairness(records) -> UnfairnessResult:
    """Cold-AUC gap between the best-cold and best-overall checkpoints.

    Ties on either criterion resolve to the earliest step. Records lacking
    a cold stratum are ignored for the cold argmax.
    """
    if not records:
        raise ValueError("unfairness needs at least one checkpoint record")
    best_overall = None
    best_cold = None
    for rec in records:
        if best_overall is None or rec.report.overall_auc > best_overall.report.overall_auc:
            best_overall = rec
        if rec.report.cold_auc is not None and (
            best_cold is None or rec.report.cold_auc > best_cold.report.cold_auc
        ):
            best_cold = rec
    if best_cold is None or best_overall.report.cold_auc is None:
        raise ValueError("no checkpoint reports a cold-user AUC")
    cold_at_overall = best_overall.report.cold_auc
    cold_at_cold = best_cold.report.cold_auc
    return UnfairnessResult(
        best_overall_step=best_overall.step,
        best_cold_step=best_cold.step,
        cold_auc_at_best_overall=cold_at_overall,
        cold_auc_at_best_cold=cold_at_cold,
        unfairness=100.0 * (cold_at_cold - cold_at_overall),
    )


# ---------------------------------------------------------------------------
# CSV emission helpers (authoritative text outputs of eval-side results)


def write_unfairness_csv(path, rows: list[dict]) -> None:
    """rows: dicts with model_tag, seed, and an UnfairnessResult under 'result'."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "model_tag", "seed", "best_overall_step", "best_cold_step",
            "cold_auc_at_best_overall", "cold_auc_at_best_cold", "unfairness",
        ])
        for row in rows:
            r: UnfairnessResult = row["result"]
            writer.writerow([
                row["model_tag"], row["seed"], r.best_overall_step,
                r.best_cold_step, repr(r.cold_auc_at_best_overall),
                repr(r.cold_auc_at_best_cold), repr(r.unfairness),
            ])


def write_buckets_csv(path, report: EvalReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bucket", "n", "auc"])
        for name, _, _ in HISTORY_BUCKETS:
            value = report.bucket_auc[name]
            writer.writerow([name, report.counts[name],
                             "" if value is None else repr(value)])
