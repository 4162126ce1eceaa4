"""Ranking and self-distillation losses.

The recommendation loss is InfoNCE at temperature 1: the negative
log-softmax probability of the one positive among 1+K candidates. The
distillation loss converts teacher scores y (full history) and student
scores y-hat (dropped history) to distributions with a per-sample softmax
and takes D_KL(teacher || student). The teacher side is detached by
default, so the consistency pressure only moves the student branch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


@dataclass
class ScorePair:
    """Teacher and student scores for the same candidates of one sample."""

    y: ad.Tensor
    y_hat: ad.Tensor

    def __post_init__(self):
        if self.y.shape != self.y_hat.shape:
            raise ValueError(
                f"teacher/student score shapes differ: {self.y.shape} vs "
                f"{self.y_hat.shape}"
            )


def infonce_loss(scores: ad.Tensor, positive_index: int) -> ad.Tensor:
    """-log softmax(scores)[positive_index] for a 1-D score vector."""
    if scores.ndim != 1:
        raise ValueError(f"scores must be 1-D, got shape {scores.shape}")
    c = scores.shape[0]
    if not 0 <= positive_index < c:
        raise ValueError(f"positive_index {positive_index} out of range [0, {c})")
    onehot = np.zeros(c)
    onehot[positive_index] = 1.0
    picked = ad.reduce_sum(ad.mul(ad.log_softmax(scores), ad.constant(onehot)))
    return ad.scale(picked, -1.0)


def infonce_loss_batch(scores: ad.Tensor, positive_indices: np.ndarray) -> ad.Tensor:
    """Mean InfoNCE over a batch. scores [b, c], positive_indices [b]."""
    b, c = scores.shape
    onehot = np.zeros((b, c))
    onehot[np.arange(b), positive_indices] = 1.0
    picked = ad.reduce_sum(ad.mul(ad.log_softmax(scores), ad.constant(onehot)), axis=1)
    return ad.scale(ad.reduce_mean(picked), -1.0)


def kl_loss(pair: ScorePair, detach_teacher: bool = True) -> ad.Tensor:
    """D_KL(softmax(y) || softmax(y_hat)) for one sample's score pair."""
    y = pair.y.detach() if detach_teacher else pair.y
    p = ad.softmax(y)
    log_p = ad.log_softmax(y)
    log_q = ad.log_softmax(pair.y_hat)
    return ad.reduce_sum(ad.mul(p, ad.sub(log_p, log_q)))


def kl_loss_batch(y: ad.Tensor, y_hat: ad.Tensor,
                  detach_teacher: bool = True) -> ad.Tensor:
    """Mean per-sample KL over a batch. y, y_hat: [b, c]."""
    if y.shape != y_hat.shape:
        raise ValueError(f"teacher/student shapes differ: {y.shape} vs {y_hat.shape}")
    teacher = y.detach() if detach_teacher else y
    p = ad.softmax(teacher)
    log_p = ad.log_softmax(teacher)
    log_q = ad.log_softmax(y_hat)
    per_sample = ad.reduce_sum(ad.mul(p, ad.sub(log_p, log_q)), axis=1)
    return ad.reduce_mean(per_sample)
