"""Encoder stack: shapes, masking, invariances, and parameter accounting."""

import numpy as np
import pytest

from bigfair import autodiff as ad
from bigfair import rng as rng_mod
from bigfair.model import (
    ModelConfig,
    big_config,
    config_by_tag,
    config_from_dict,
    config_to_dict,
    encode_news_batch,
    encode_user_batch,
    expected_parameter_count,
    init_params,
    replace_empty_users,
    score_from_vectors,
    small_config,
)

TINY = dict(vocab_size=30, token_embed_dim=8, hidden_dim=8, num_heads=2,
            num_layers=2, dropout_rate=0.2, max_title_len=6,
            max_history_len=5, query_dim=4)


def tiny_params(seed=0, **overrides):
    cfg = ModelConfig(**{**TINY, **overrides})
    return init_params(cfg, rng_mod.stream(seed, "init")), cfg


def random_tokens(rng, n, length, vocab_size, min_len=1):
    """Rows of token ids with deterministic true lengths and pad tails."""
    tokens = np.zeros((n, length), dtype=np.int64)
    for i in range(n):
        true = min_len + rng.randint(length - min_len + 1)
        for j in range(true):
            tokens[i, j] = 2 + rng.randint(vocab_size - 2)
    return tokens


class TestConfig:
    def test_capacity_presets(self):
        small = small_config(5000)
        assert (small.token_embed_dim, small.hidden_dim, small.num_heads,
                small.num_layers) == (300, 400, 20, 1)
        assert small.capacity_tag == "small"
        big = big_config(5000)
        assert (big.token_embed_dim, big.hidden_dim, big.num_heads,
                big.num_layers) == (128, 128, 8, 4)
        assert big.capacity_tag == "big"
        assert config_by_tag("big", 100).hidden_dim == 128
        with pytest.raises(ValueError):
            config_by_tag("medium", 100)

    def test_overrides_apply(self):
        cfg = config_by_tag("small", 100, hidden_dim=32, num_heads=4)
        assert cfg.hidden_dim == 32 and cfg.num_heads == 4

    def test_dict_round_trip(self):
        cfg = ModelConfig(**TINY)
        assert config_from_dict(config_to_dict(cfg)) == cfg

    def test_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(**{**TINY, "hidden_dim": 10, "num_heads": 4})
        with pytest.raises(ValueError):
            ModelConfig(**{**TINY, "dropout_rate": 1.0})
        with pytest.raises(ValueError):
            ModelConfig(**{**TINY, "num_layers": 0})
        with pytest.raises(ValueError):
            ModelConfig(**{**TINY, "vocab_size": 1})


class TestParameters:
    def test_count_matches_closed_form(self):
        for kwargs in (TINY,
                       {**TINY, "num_layers": 1},
                       {**TINY, "token_embed_dim": 12, "hidden_dim": 16,
                        "num_heads": 4, "query_dim": 6}):
            cfg = ModelConfig(**kwargs)
            params = init_params(cfg, rng_mod.stream(0, "init"))
            assert params.total_parameters() == expected_parameter_count(cfg)

    def test_init_deterministic(self):
        a, _ = tiny_params(seed=4)
        b, _ = tiny_params(seed=4)
        c, _ = tiny_params(seed=5)
        for name, tensor in a.items():
            assert np.array_equal(tensor.data, b[name].data)
        assert any(not np.array_equal(tensor.data, c[name].data)
                   for name, tensor in a.items())

    def test_copy_values_detaches_storage(self):
        a, _ = tiny_params()
        b = a.copy_values()
        b["token_embedding"].data[0, 0] += 1.0
        assert a["token_embedding"].data[0, 0] != b["token_embedding"].data[0, 0]


class TestNewsEncoder:
    def test_output_shape(self):
        params, cfg = tiny_params()
        rng = rng_mod.stream(1, "data")
        tokens = random_tokens(rng, 7, cfg.max_title_len, cfg.vocab_size)
        out = encode_news_batch(params, tokens)
        assert out.shape == (7, cfg.hidden_dim)

    def test_pad_trim_invariance(self):
        params, cfg = tiny_params()
        rng = rng_mod.stream(2, "data")
        tokens = random_tokens(rng, 5, cfg.max_title_len, cfg.vocab_size)
        tokens[:, -2:] = 0  # force two all-pad tail columns
        tokens[:, 0] = 3    # keep every row non-empty
        full = encode_news_batch(params, tokens)
        trimmed = encode_news_batch(params, tokens[:, :-2])
        assert np.array_equal(full.data, trimmed.data)

    def test_row_order_equivariance(self):
        params, cfg = tiny_params()
        rng = rng_mod.stream(3, "data")
        tokens = random_tokens(rng, 6, cfg.max_title_len, cfg.vocab_size)
        out = encode_news_batch(params, tokens)
        perm = np.array([4, 0, 5, 2, 1, 3])
        out_perm = encode_news_batch(params, tokens[perm])
        assert np.allclose(out.data[perm], out_perm.data, rtol=0, atol=0)

    def test_eval_mode_is_deterministic_and_ignores_rng(self):
        params, cfg = tiny_params()
        rng = rng_mod.stream(4, "data")
        tokens = random_tokens(rng, 4, cfg.max_title_len, cfg.vocab_size)
        a = encode_news_batch(params, tokens)
        b = encode_news_batch(params, tokens, train_mode=False,
                              rng=rng_mod.stream(9, "dropout"))
        assert np.array_equal(a.data, b.data)

    def test_train_mode_dropout_changes_output(self):
        params, cfg = tiny_params()
        rng = rng_mod.stream(5, "data")
        tokens = random_tokens(rng, 4, cfg.max_title_len, cfg.vocab_size)
        base = encode_news_batch(params, tokens)
        dropped = encode_news_batch(params, tokens, train_mode=True,
                                    rng=rng_mod.stream(1, "dropout"))
        assert not np.array_equal(base.data, dropped.data)
        # identical dropout streams replay identical masks
        again = encode_news_batch(params, tokens, train_mode=True,
                                  rng=rng_mod.stream(1, "dropout"))
        assert np.array_equal(dropped.data, again.data)

    def test_all_pad_title_rejected(self):
        params, cfg = tiny_params()
        tokens = np.zeros((2, 4), dtype=np.int64)
        tokens[0, 0] = 3
        with pytest.raises(ValueError, match="padding"):
            encode_news_batch(params, tokens)

    def test_too_wide_input_rejected(self):
        params, cfg = tiny_params()
        tokens = np.full((1, cfg.max_title_len + 1), 3, dtype=np.int64)
        with pytest.raises(ValueError):
            encode_news_batch(params, tokens)

    def test_residual_identity_when_attention_silenced(self):
        # zeroing the attention output projections turns every block into
        # x + 0, so extra layers must change nothing downstream
        deep, cfg4 = tiny_params(num_layers=4, seed=11)
        for name, tensor in deep.items():
            if name.endswith(".wo") or name.endswith(".ob"):
                tensor.data[...] = 0.0
        shallow, cfg2 = tiny_params(num_layers=2, seed=11)
        for name, tensor in shallow.items():
            tensor.data[...] = deep[name].data
        rng = rng_mod.stream(6, "data")
        tokens = random_tokens(rng, 3, cfg2.max_title_len, cfg2.vocab_size)
        two = encode_news_batch(shallow, tokens)
        four = encode_news_batch(deep, tokens)
        assert np.array_equal(two.data, four.data)


class TestUserEncoderAndScoring:
    def build_user_inputs(self, params, cfg, b=3, h=4, seed=7):
        rng = rng_mod.stream(seed, "data")
        tokens = random_tokens(rng, b * h, cfg.max_title_len, cfg.vocab_size)
        news = encode_news_batch(params, tokens)
        vecs = ad.reshape(news, (b, h, cfg.hidden_dim))
        mask = np.ones((b, h), dtype=bool)
        mask[0, 2:] = False
        return vecs, mask

    def test_history_permutation_invariance(self):
        params, cfg = tiny_params()
        vecs, mask = self.build_user_inputs(params, cfg)
        out = encode_user_batch(params, vecs, mask)
        perm = np.array([1, 0, 3, 2])
        vperm = ad.constant(vecs.data[:, perm])
        out_perm = encode_user_batch(params, vperm, mask[:, perm])
        assert np.allclose(out.data, out_perm.data, rtol=1e-12, atol=1e-12)

    def test_masked_positions_are_inert(self):
        params, cfg = tiny_params()
        vecs, mask = self.build_user_inputs(params, cfg)
        out = encode_user_batch(params, vecs, mask)
        poisoned = vecs.data.copy()
        poisoned[0, 2:] = 1e6
        out2 = encode_user_batch(params, ad.constant(poisoned), mask)
        assert np.array_equal(out.data, out2.data)

    def test_score_shape_and_projection_scaling(self):
        params, cfg = tiny_params()
        rng = rng_mod.stream(8, "data")
        users = ad.constant(np.array([[rng.normal() for _ in range(cfg.hidden_dim)] for _ in range(3)]))
        cands = ad.constant(np.array([[[rng.normal() for _ in range(cfg.hidden_dim)] for _ in range(5)] for _ in range(3)]))
        scores = score_from_vectors(params, users, cands)
        assert scores.shape == (3, 5)
        params["score_proj"].data[...] *= 2.0
        rescored = score_from_vectors(params, users, cands)
        assert np.allclose(rescored.data, 4.0 * scores.data, rtol=1e-12)

    def test_replace_empty_users(self):
        params, cfg = tiny_params()
        rng = rng_mod.stream(9, "data")
        users = ad.constant(np.array([[rng.normal() for _ in range(cfg.hidden_dim)] for _ in range(4)]))
        empty = np.array([False, True, False, True])
        out = replace_empty_users(params, users, empty)
        assert np.array_equal(out.data[0], users.data[0])
        assert np.array_equal(out.data[2], users.data[2])
        assert np.array_equal(out.data[1], params["empty_history"].data)
        assert np.array_equal(out.data[3], params["empty_history"].data)
        untouched = replace_empty_users(params, users, np.zeros(4, dtype=bool))
        assert untouched is users

    def test_empty_history_vector_receives_gradient(self):
        params, cfg = tiny_params()
        rng = rng_mod.stream(10, "data")
        users = ad.constant(np.array([[rng.normal() for _ in range(cfg.hidden_dim)] for _ in range(2)]))
        with ad.record():
            out = replace_empty_users(params, users,
                                      np.array([False, True]))
            loss = ad.reduce_mean(ad.mul(out, out))
            loss.backward()
        assert params["empty_history"].grad is not None
        assert np.abs(params["empty_history"].grad).sum() > 0
