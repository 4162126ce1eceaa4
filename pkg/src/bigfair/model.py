"""Attention-based news and user encoders with a dot-product scoring head.

The architecture follows the NRMS recipe: token embeddings feed one or more
multi-head self-attention layers with padding masks, an additive attention
pools token positions into a news vector, the same two stages (one
self-attention layer, one additive pooling) turn a user's history of news
vectors into a user vector, and a candidate's score is the dot product of
the two vectors after both pass through one shared final projection. That
shared projection makes score scale behavior explicit: scaling it by c
scales every score by c².

Capacity presets: "small" is a single wide layer (embed 300, hidden 400,
20 heads); "big" trades width for depth (embed 128, hidden 128, 8 heads,
4 layers), the stand-in for a large pretrained encoder at desk scale.

Neither encoder uses positional information: user interest is treated as a
set, which is what makes uniformly dropping history items a
distribution-preserving augmentation.

Batched entry points do the heavy lifting (every title in a batch is
encoded in one pass, histories and candidates are gathered by index);
the single-sample functions wrap them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields as dataclass_fields

import numpy as np

from . import autodiff as ad
from .datatypes import PAD_ID


@dataclass
class ModelConfig:
    vocab_size: int
    token_embed_dim: int = 300
    hidden_dim: int = 400
    num_heads: int = 20
    num_layers: int = 1
    dropout_rate: float = 0.2
    max_title_len: int = 30
    max_history_len: int = 50
    query_dim: int = 200
    capacity_tag: str = "small"

    def __post_init__(self):
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by "
                f"num_heads {self.num_heads}"
            )
        if self.vocab_size < 2:
            raise ValueError("vocab_size must cover pad and oov ids")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0,1), got {self.dropout_rate}")
        if self.num_layers < 1:
            raise ValueError("num_layers must be at least 1")


def small_config(vocab_size: int, **overrides) -> ModelConfig:
    base = dict(token_embed_dim=300, hidden_dim=400, num_heads=20, num_layers=1,
                dropout_rate=0.2, query_dim=200, capacity_tag="small")
    base.update(overrides)
    return ModelConfig(vocab_size=vocab_size, **base)


def big_config(vocab_size: int, **overrides) -> ModelConfig:
    base = dict(token_embed_dim=128, hidden_dim=128, num_heads=8, num_layers=4,
                dropout_rate=0.2, query_dim=128, capacity_tag="big")
    base.update(overrides)
    return ModelConfig(vocab_size=vocab_size, **base)


def config_by_tag(tag: str, vocab_size: int, **overrides) -> ModelConfig:
    if tag == "small":
        return small_config(vocab_size, **overrides)
    if tag == "big":
        return big_config(vocab_size, **overrides)
    raise ValueError(f"unknown capacity tag {tag!r}; expected 'small' or 'big'")


def config_to_dict(cfg: ModelConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in dataclass_fields(ModelConfig)}


def config_from_dict(d: dict) -> ModelConfig:
    kwargs = {}
    for f in dataclass_fields(ModelConfig):
        if f.name not in d:
            raise ValueError(f"model config missing field {f.name!r}")
        raw = d[f.name]
        if f.type in ("int",):
            kwargs[f.name] = int(raw)
        elif f.type in ("float",):
            kwargs[f.name] = float(raw)
        else:
            kwargs[f.name] = str(raw)
    return ModelConfig(**kwargs)


class ModelParams:
    """Named parameter tensors. Iteration order is creation order and is
    part of the reproducibility contract (checkpoints and the init stream
    both follow it)."""

    def __init__(self, cfg: ModelConfig, tensors: dict[str, ad.Tensor]):
        self.cfg = cfg
        self.tensors = tensors

    def __getitem__(self, name: str) -> ad.Tensor:
        return self.tensors[name]

    def items(self):
        return self.tensors.items()

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def total_parameters(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy_values(self) -> "ModelParams":
        copied = {name: ad.parameter(t.data.copy()) for name, t in self.tensors.items()}
        return ModelParams(self.cfg, copied)


def _glorot(rng, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    n = int(np.prod(shape))
    return (rng.uniforms(n) * 2.0 - 1.0).reshape(shape) * limit


def _uniform_pm(rng, shape, half_width: float = 0.1) -> np.ndarray:
    n = int(np.prod(shape))
    return (rng.uniforms(n) * 2.0 - 1.0).reshape(shape) * half_width


def init_params(cfg: ModelConfig, rng) -> ModelParams:
    """Fresh parameters from the init stream: uniform(-0.1, 0.1) embeddings,
    Glorot-uniform projections, zero biases."""
    d = cfg.hidden_dim
    a = cfg.query_dim
    t: dict[str, ad.Tensor] = {}

    def add(name, arr):
        t[name] = ad.parameter(arr)

    add("token_embedding", _uniform_pm(rng, (cfg.vocab_size, cfg.token_embed_dim)))
    for layer in range(cfg.num_layers):
        din = cfg.token_embed_dim if layer == 0 else d
        base = f"news_attn.{layer}"
        for proj in ("wq", "wk", "wv"):
            add(f"{base}.{proj}", _glorot(rng, din, d, (din, d)))
            add(f"{base}.{proj[1]}b", np.zeros(d))
        add(f"{base}.wo", _glorot(rng, d, d, (d, d)))
        add(f"{base}.ob", np.zeros(d))
    add("news_pool.proj_w", _glorot(rng, d, a, (d, a)))
    add("news_pool.proj_b", np.zeros(a))
    add("news_pool.query", _glorot(rng, a, 1, (a,)))

    base = "user_attn.0"
    for proj in ("wq", "wk", "wv"):
        add(f"{base}.{proj}", _glorot(rng, d, d, (d, d)))
        add(f"{base}.{proj[1]}b", np.zeros(d))
    add(f"{base}.wo", _glorot(rng, d, d, (d, d)))
    add(f"{base}.ob", np.zeros(d))
    add("user_pool.proj_w", _glorot(rng, d, a, (d, a)))
    add("user_pool.proj_b", np.zeros(a))
    add("user_pool.query", _glorot(rng, a, 1, (a,)))

    add("empty_history", _uniform_pm(rng, (d,)))
    add("score_proj", _glorot(rng, d, d, (d, d)))
    return ModelParams(cfg, t)


def expected_parameter_count(cfg: ModelConfig) -> int:
    """Closed-form parameter count; tests assert it against the real dict."""
    d, a, e = cfg.hidden_dim, cfg.query_dim, cfg.token_embed_dim
    total = cfg.vocab_size * e
    for layer in range(cfg.num_layers):
        din = e if layer == 0 else d
        total += 3 * (din * d + d) + d * d + d
    total += d * a + a + a          # news pooling
    total += 3 * (d * d + d) + d * d + d  # user self-attention
    total += d * a + a + a          # user pooling
    total += d                      # empty-history vector
    total += d * d                  # shared score projection
    return total


# ---------------------------------------------------------------------------
# forward pieces


def _self_attention(params: ModelParams, prefix: str, x: ad.Tensor,
                    key_mask: np.ndarray, cfg: ModelConfig,
                    train_mode: bool, rng) -> ad.Tensor:
    """Multi-head self-attention with additive -1e9 masking on pad keys.

    x: [n, length, din]; key_mask: [n, length] bool, True = real position.

    Whenever the input and output widths agree the block is residual
    (x + dropout(attention(x))). Stacked attention without an identity
    path contracts toward its mean at depth and the deeper configuration
    barely trains; with it, depth behaves. The one non-residual case is a
    first news layer whose token embedding width differs from hidden_dim.
    """
    n, length = x.shape[0], x.shape[1]
    d = cfg.hidden_dim
    heads = cfg.num_heads
    dh = d // heads

    def project(name, bias):
        return ad.add_bias(ad.matmul(x, params[f"{prefix}.{name}"]),
                           params[f"{prefix}.{bias}"])

    def split_heads(t):
        return ad.transpose(ad.reshape(t, (n, length, heads, dh)), (0, 2, 1, 3))

    q = split_heads(project("wq", "qb"))
    k = split_heads(project("wk", "kb"))
    v = split_heads(project("wv", "vb"))

    scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    scores = ad.masked_fill(scores, ~key_mask[:, None, None, :], -1e9)
    attn = ad.softmax(scores)
    ctx = ad.reshape(ad.transpose(ad.matmul(attn, v), (0, 2, 1, 3)), (n, length, d))
    out = ad.add_bias(ad.matmul(ctx, params[f"{prefix}.wo"]), params[f"{prefix}.ob"])
    if train_mode:
        out = ad.dropout(out, cfg.dropout_rate, rng)
    if x.shape == out.shape:
        out = ad.add(x, out)
    return out


def _additive_pool(params: ModelParams, prefix: str, x: ad.Tensor,
                   mask: np.ndarray) -> ad.Tensor:
    """Additive attention pooling over axis 1. x: [n, length, d] -> [n, d].

    Rows whose mask is entirely False pool with uniform weights (the -1e9
    fill cancels in the softmax shift); callers replace such rows.
    """
    n, length = x.shape[0], x.shape[1]
    a = params.cfg.query_dim
    h = ad.tanh(ad.add_bias(ad.matmul(x, params[f"{prefix}.proj_w"]),
                            params[f"{prefix}.proj_b"]))
    logits = ad.reshape(ad.matmul(h, ad.reshape(params[f"{prefix}.query"], (a, 1))),
                        (n, length))
    logits = ad.masked_fill(logits, ~mask, -1e9)
    weights = ad.softmax(logits)
    pooled = ad.matmul(ad.reshape(weights, (n, 1, length)), x)
    return ad.reshape(pooled, (n, x.shape[2]))


def encode_news_batch(params: ModelParams, token_rows: np.ndarray,
                      train_mode: bool = False, rng=None) -> ad.Tensor:
    """Encode a batch of titles: [n, length] int ids -> [n, hidden_dim].

    length may be any value up to max_title_len: trailing pad columns can
    be trimmed before the call, which changes nothing except speed because
    pad positions are masked out of every attention step.
    """
    cfg = params.cfg
    token_rows = np.asarray(token_rows)
    if token_rows.ndim != 2 or token_rows.shape[1] > cfg.max_title_len:
        raise ValueError(
            f"token_rows must be [n, <= {cfg.max_title_len}], got {token_rows.shape}"
        )
    valid = token_rows != PAD_ID
    if not valid.any(axis=1).all():
        raise ValueError("encode_news_batch: a title consists only of padding")
    x = ad.embedding_lookup(params["token_embedding"], token_rows)
    if train_mode:
        x = ad.dropout(x, cfg.dropout_rate, rng)
    for layer in range(cfg.num_layers):
        x = _self_attention(params, f"news_attn.{layer}", x, valid, cfg,
                            train_mode, rng)
    return _additive_pool(params, "news_pool", x, valid)


def encode_user_batch(params: ModelParams, history_vecs: ad.Tensor,
                      history_mask: np.ndarray, train_mode: bool = False,
                      rng=None) -> ad.Tensor:
    """History vectors [b, h, d] + mask [b, h] -> user vectors [b, d]."""
    cfg = params.cfg
    x = _self_attention(params, "user_attn.0", history_vecs, history_mask, cfg,
                        train_mode, rng)
    return _additive_pool(params, "user_pool", x, history_mask)


def apply_score_projection(params: ModelParams, vecs: ad.Tensor) -> ad.Tensor:
    return ad.matmul(vecs, params["score_proj"])


def score_from_vectors(params: ModelParams, user_vecs: ad.Tensor,
                       cand_vecs: ad.Tensor) -> ad.Tensor:
    """Dot-product scores through the shared projection.

    user_vecs [b, d], cand_vecs [b, c, d] -> [b, c].
    """
    b, c = cand_vecs.shape[0], cand_vecs.shape[1]
    u = apply_score_projection(params, user_vecs)
    v = apply_score_projection(params, cand_vecs)
    out = ad.matmul(v, ad.reshape(u, (b, params.cfg.hidden_dim, 1)))
    return ad.reshape(out, (b, c))


def replace_empty_users(params: ModelParams, user_vecs: ad.Tensor,
                        empty_rows: np.ndarray) -> ad.Tensor:
    """Swap the learned empty-history vector into rows flagged empty."""
    if not empty_rows.any():
        return user_vecs
    b, d = user_vecs.shape
    flags = np.broadcast_to(empty_rows[:, None], (b, d))
    keep = ad.constant(np.where(flags, 0.0, 1.0))
    use_empty = ad.constant(np.where(flags, 1.0, 0.0))
    empty = ad.take(ad.reshape(params["empty_history"], (1, d)),
                    np.zeros(b, dtype=np.int64))
    return ad.add(ad.mul(user_vecs, keep), ad.mul(empty, use_empty))


# ---------------------------------------------------------------------------
# single-sample wrappers


def encode_news(params: ModelParams, token_ids, train_mode: bool = False,
                rng=None) -> ad.Tensor:
    """One padded title -> [hidden_dim] vector."""
    cfg = params.cfg
    ids = np.asarray(token_ids)
    if ids.shape != (cfg.max_title_len,):
        raise ValueError(
            f"title must have exactly {cfg.max_title_len} token ids, got {ids.shape}"
        )
    return ad.reshape(encode_news_batch(params, ids[None, :], train_mode, rng),
                      (cfg.hidden_dim,))


def encode_user(params: ModelParams, history_vecs: ad.Tensor,
                train_mode: bool = False, rng=None) -> ad.Tensor:
    """History vectors [n, hidden_dim] (1 <= n <= max_history_len) -> [hidden_dim]."""
    cfg = params.cfg
    n = history_vecs.shape[0]
    if not 1 <= n <= cfg.max_history_len:
        raise ValueError(
            f"history length must be in [1, {cfg.max_history_len}], got {n}"
        )
    batched = ad.reshape(history_vecs, (1, n, cfg.hidden_dim))
    mask = np.ones((1, n), dtype=bool)
    return ad.reshape(encode_user_batch(params, batched, mask, train_mode, rng),
                      (cfg.hidden_dim,))


def score_candidates(params: ModelParams, sample, store,
                     history_override: list[str] | None = None,
                     train_mode: bool = False, rng=None) -> ad.Tensor:
    """Scores for one sample's candidates: [len(candidates)].

    `sample` is any record with .user and .candidates. The user side comes
    from history_override when given (the augmented branch), else from the
    full history; an empty history falls back to the learned empty vector.
    """
    cfg = params.cfg
    history = sample.user.history if history_override is None else history_override
    if not sample.candidates:
        raise ValueError("score_candidates: no candidates")
    history = history[-cfg.max_history_len:]
    ids = list(history) + list(sample.candidates)
    rows = store.rows_for(ids)
    token_rows = store.tokens[rows]
    news_vecs = encode_news_batch(params, token_rows, train_mode, rng)

    h = len(history)
    c = len(sample.candidates)
    if h > 0:
        hist = ad.take(news_vecs, np.arange(h, dtype=np.int64)[None, :])
        user = encode_user_batch(params, hist, np.ones((1, h), dtype=bool),
                                 train_mode, rng)
    else:
        user = ad.reshape(params["empty_history"], (1, cfg.hidden_dim))
    cand = ad.take(news_vecs, (h + np.arange(c, dtype=np.int64))[None, :])
    return ad.reshape(score_from_vectors(params, user, cand), (c,))
