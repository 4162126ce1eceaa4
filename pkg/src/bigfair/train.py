"""Training loop: shuffled minibatches, periodic checkpoint evaluation,
early stopping on overall AUC, and the optional self-distillation branch.

Each step encodes every title a batch touches exactly once, gathers
history and candidate vectors by index, and scores 1+K candidates per
sample (teacher branch). With the distillation branch enabled, each
sample's history is thinned by drop_behaviors and re-scored (student
branch); the student's candidate vectors are reused from the teacher pass,
and the KL consistency term pulls the student's score distribution toward
the detached teacher's. Batch losses are means over the samples present.

Checkpoints land at steps {0, eval_interval, 2*eval_interval, ...}; the
run stops at max_steps or after early_stop_patience evaluations without a
new best overall AUC. A run aborts with the offending step number if the
loss ever goes non-finite.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, fields as dataclass_fields

import numpy as np

from . import autodiff as ad
from . import rng as rng_mod
from .checkpoint import save_checkpoint
from .datatypes import Datasets, TrainingSample, drop_behaviors
from .evaluation import EvalReport, evaluate
from .losses import infonce_loss_batch, kl_loss_batch
from .model import (
    ModelConfig,
    ModelParams,
    encode_news_batch,
    encode_user_batch,
    init_params,
    replace_empty_users,
    score_from_vectors,
)
from .optim import Adam


@dataclass
class TrainConfig:
    p: float = 0.5
    k: int = 4
    learning_rate: float = 1e-4
    batch_size: int = 32
    max_steps: int = 1000
    eval_interval: int = 200
    early_stop_patience: int = 5
    bigfair_enabled: bool = False
    master_seed: int = 0
    detach_teacher: bool = True
    shared_dropout: bool = False
    resample_drop: bool = True
    kl_weight: float = 1.0
    checkpoint_mode: str = "all"  # "all" | "none"
    cold_threshold: int = 5

    def validate(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0,1], got {self.p}")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.eval_interval < 1:
            raise ValueError("eval_interval must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.max_steps < 0:
            raise ValueError("max_steps cannot be negative")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be at least 1")
        if self.checkpoint_mode not in ("all", "none"):
            raise ValueError(f"unknown checkpoint_mode {self.checkpoint_mode!r}")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclass_fields(TrainConfig)}


@dataclass
class CheckpointRecord:
    step: int
    path: str | None
    report: EvalReport


@dataclass
class _Batch:
    """Index bundle for one teacher forward pass.

    Every news id a batch touches is encoded once; histories and candidate
    slates gather from that deduplicated block by row index. Popular items
    recur across histories constantly, so this cuts the title-encoder work
    severalfold. It also means repeated occurrences of one item share their
    dropout draws within the step, which is harmless noise coupling.
    """

    tokens: np.ndarray          # [u, len] trimmed unique title rows
    row_by_id: dict[str, int]   # news id -> row in the encoded block
    hist_index: np.ndarray      # [b, h_max] into the encoded title block
    hist_mask: np.ndarray       # [b, h_max]
    cand_index: np.ndarray      # [b, 1+k]
    empty_rows: np.ndarray      # [b] users with no history at all
    positives: np.ndarray       # [b]
    samples: list[TrainingSample] = field(default_factory=list)


def _assemble(samples: list[TrainingSample], store, max_history_len: int) -> _Batch:
    histories = [s.user.history[-max_history_len:] for s in samples]
    h_max = max(1, max(len(h) for h in histories))
    c = len(samples[0].candidates)
    b = len(samples)

    row_by_id: dict[str, int] = {}
    hist_index = np.zeros((b, h_max), dtype=np.int64)
    hist_mask = np.zeros((b, h_max), dtype=bool)
    cand_index = np.zeros((b, c), dtype=np.int64)
    for i, (sample, history) in enumerate(zip(samples, histories)):
        if len(sample.candidates) != c:
            raise ValueError("all samples in a batch must have equal candidate counts")
        for j, nid in enumerate(history):
            hist_index[i, j] = row_by_id.setdefault(nid, len(row_by_id))
        hist_mask[i, :len(history)] = True
        for j, nid in enumerate(sample.candidates):
            cand_index[i, j] = row_by_id.setdefault(nid, len(row_by_id))

    rows = store.rows_for(list(row_by_id))
    tokens = store.tokens[rows]
    max_len = int(store.lengths[rows].max())
    return _Batch(
        tokens=tokens[:, :max_len],
        row_by_id=row_by_id,
        hist_index=hist_index,
        hist_mask=hist_mask,
        cand_index=cand_index,
        empty_rows=~hist_mask.any(axis=1),
        positives=np.array([s.positive_index for s in samples], dtype=np.int64),
        samples=samples,
    )


def _student_views(batch: _Batch, cfg: TrainConfig,
                   drop_rng, fixed_drops: dict[int, list[str]] | None,
                   sample_ids: list[int], max_history_len: int):
    """Dropped-history views for every sample with a non-empty history.

    Returns (eligible row indices, kept histories).
    """
    eligible: list[int] = []
    kept_lists: list[list[str]] = []
    for row, sample in enumerate(batch.samples):
        history = sample.user.history[-max_history_len:]
        if not history:
            continue  # augmentation undefined; KL branch skips these
        if fixed_drops is not None:
            kept = fixed_drops[sample_ids[row]]
        else:
            kept = drop_behaviors(history, cfg.p, drop_rng)
        eligible.append(row)
        kept_lists.append(kept)
    return eligible, kept_lists


def train(datasets: Datasets, model_cfg: ModelConfig, train_cfg: TrainConfig,
          out_dir) -> list[CheckpointRecord]:
    """Run one training job and return its checkpoint records.

    Writes metrics.csv, run_manifest, and (per checkpoint_mode) checkpoint
    files into out_dir.
    """
    train_cfg.validate()
    if not datasets.train_samples:
        raise ValueError("training set is empty")
    os.makedirs(out_dir, exist_ok=True)

    seed = train_cfg.master_seed
    init_rng = rng_mod.stream(seed, "init")
    dropout_rng = rng_mod.stream(seed, "dropout")
    drop_rng = rng_mod.stream(seed, "behavior_drop")
    shuffle_rng = rng_mod.stream(seed, "shuffle")

    params = init_params(model_cfg, init_rng)
    opt = Adam(params.tensors, lr=train_cfg.learning_rate)
    store = datasets.news

    fixed_drops = None
    if train_cfg.bigfair_enabled and not train_cfg.resample_drop:
        # one frozen augmentation per sample, drawn once in dataset order
        fixed_drops = {}
        for idx, sample in enumerate(datasets.train_samples):
            history = sample.user.history[-model_cfg.max_history_len:]
            if history:
                fixed_drops[idx] = drop_behaviors(history, train_cfg.p, drop_rng)

    order: list[int] = []
    cursor = 0

    def next_batch_indices() -> list[int]:
        nonlocal order, cursor
        if cursor >= len(order):
            order = list(range(len(datasets.train_samples)))
            shuffle_rng.shuffle(order)
            cursor = 0
        chunk = order[cursor:cursor + train_cfg.batch_size]
        cursor += len(chunk)
        return chunk

    records: list[CheckpointRecord] = []
    metrics_rows: list[list] = []
    window_loss: list[float] = []
    window_rec: list[float] = []
    window_kl: list[float] = []
    best_overall = -math.inf
    stale_evals = 0
    step = 0
    status = "running"

    def run_eval_checkpoint() -> bool:
        """Record a checkpoint; True if training should stop early."""
        nonlocal best_overall, stale_evals
        report = evaluate(params, datasets.eval_impressions, store,
                          cold_threshold=train_cfg.cold_threshold)
        path = None
        if train_cfg.checkpoint_mode == "all":
            path = os.path.join(out_dir, f"checkpoint_{step:06d}.bin")
            save_checkpoint(params, path)
        records.append(CheckpointRecord(step, path, report))

        def fmt(values: list[float]) -> str:
            return repr(math.fsum(values) / len(values)) if values else ""

        metrics_rows.append([
            step, fmt(window_loss), fmt(window_rec), fmt(window_kl),
            repr(report.overall_auc),
            "" if report.heavy_auc is None else repr(report.heavy_auc),
            "" if report.cold_auc is None else repr(report.cold_auc),
        ])
        window_loss.clear()
        window_rec.clear()
        window_kl.clear()

        if report.overall_auc > best_overall:
            best_overall = report.overall_auc
            stale_evals = 0
            return False
        stale_evals += 1
        return stale_evals >= train_cfg.early_stop_patience

    try:
        while True:
            if step % train_cfg.eval_interval == 0:
                if run_eval_checkpoint():
                    status = "early_stop"
                    break
            if step >= train_cfg.max_steps:
                status = "max_steps"
                break

            indices = next_batch_indices()
            samples = [datasets.train_samples[i] for i in indices]
            batch = _assemble(samples, store, model_cfg.max_history_len)

            with ad.record():
                news = encode_news_batch(params, batch.tokens, True, dropout_rng)
                user_rng_snapshot = dropout_rng.clone()
                hist = ad.take(news, batch.hist_index)
                users = encode_user_batch(params, hist, batch.hist_mask, True,
                                          dropout_rng)
                users = replace_empty_users(params, users, batch.empty_rows)
                teacher_scores = score_from_vectors(
                    params, users, ad.take(news, batch.cand_index))
                rec_loss = infonce_loss_batch(teacher_scores, batch.positives)
                total = rec_loss
                kl_value = 0.0

                if train_cfg.bigfair_enabled:
                    eligible, kept_lists = _student_views(
                        batch, train_cfg, drop_rng, fixed_drops, indices,
                        model_cfg.max_history_len)
                    if eligible:
                        student_scores = _student_forward(
                            params, batch, store, news, eligible, kept_lists,
                            train_cfg, dropout_rng, user_rng_snapshot)
                        teacher_sub = ad.take(
                            teacher_scores, np.asarray(eligible, dtype=np.int64))
                        kl = kl_loss_batch(teacher_sub, student_scores,
                                           train_cfg.detach_teacher)
                        kl_value = float(kl.data)
                        total = ad.add(total, ad.scale(kl, train_cfg.kl_weight))

                loss_value = float(total.data)
                if not np.isfinite(loss_value):
                    raise RuntimeError(
                        f"non-finite loss {loss_value} at step {step + 1}; aborting"
                    )
                ad.backward(total)

            opt.step()
            window_loss.append(loss_value)
            window_rec.append(float(rec_loss.data))
            window_kl.append(kl_value)
            step += 1
    except BaseException:
        _write_outputs(out_dir, model_cfg, train_cfg, datasets, metrics_rows,
                       status="failed", step=step)
        raise

    _write_outputs(out_dir, model_cfg, train_cfg, datasets, metrics_rows,
                   status=status, step=step)
    return records


def _student_forward(params: ModelParams, batch: _Batch, store, teacher_news,
                     eligible: list[int], kept_lists: list[list[str]],
                     train_cfg: TrainConfig, dropout_rng, user_rng_snapshot):
    """Score the dropped-history views. Candidate vectors always come from
    the teacher's encoded block; history vectors are re-encoded with fresh
    dropout unless shared_dropout reuses the teacher's encodings and
    dropout sequence (the P=0 identity configuration)."""
    b = len(eligible)
    h_max = max(len(kept) for kept in kept_lists)
    hist_mask = np.zeros((b, h_max), dtype=bool)
    for r, kept in enumerate(kept_lists):
        hist_mask[r, :len(kept)] = True

    if train_cfg.shared_dropout:
        hist_index = np.zeros((b, h_max), dtype=np.int64)
        for r, kept in enumerate(kept_lists):
            hist_index[r, :len(kept)] = [batch.row_by_id[nid] for nid in kept]
        hist = ad.take(teacher_news, hist_index)
        user_rng = user_rng_snapshot
    else:
        row_by_id: dict[str, int] = {}
        hist_index = np.zeros((b, h_max), dtype=np.int64)
        for r, kept in enumerate(kept_lists):
            for j, nid in enumerate(kept):
                hist_index[r, j] = row_by_id.setdefault(nid, len(row_by_id))
        rows = store.rows_for(list(row_by_id))
        tokens = store.tokens[rows]
        max_len = int(store.lengths[rows].max())
        student_news = encode_news_batch(params, tokens[:, :max_len], True,
                                         dropout_rng)
        hist = ad.take(student_news, hist_index)
        user_rng = dropout_rng

    users = encode_user_batch(params, hist, hist_mask, True, user_rng)
    cand_index = batch.cand_index[eligible]
    return score_from_vectors(params, users, ad.take(teacher_news, cand_index))


def _write_outputs(out_dir, model_cfg: ModelConfig, train_cfg: TrainConfig,
                   datasets: Datasets, metrics_rows: list[list], status: str,
                   step: int) -> None:
    metrics_path = os.path.join(out_dir, "metrics.csv")
    with open(metrics_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "rec_loss", "kl_loss",
                         "overall_auc", "heavy_auc", "cold_auc"])
        writer.writerows(metrics_rows)

    manifest_path = os.path.join(out_dir, "run_manifest")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write("schema_version=1\n")
        fh.write(f"status={status}\n")
        fh.write(f"partial={'true' if status == 'failed' else 'false'}\n")
        fh.write(f"steps_completed={step}\n")
        for key, value in sorted(model_cfg.__dict__.items()):
            fh.write(f"model.{key}={value}\n")
        for key, value in sorted(train_cfg.as_dict().items()):
            fh.write(f"train.{key}={value}\n")
        for key, value in sorted(datasets.stats.items()):
            fh.write(f"data.{key}={value}\n")
