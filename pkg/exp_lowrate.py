"""Probe: low train_impressions_rate => multi-epoch training at 10k users.

Hypothesis: the cold decline needs repeated exposure to heavy-user samples
(epochs), not just many distinct users.  With rate ~0.1 the train pool is
~12k samples, ~97% of them from heavy users, so 800-1200 steps at bs32
covers 2-3 epochs and the big model can over-specialise on heavy behaviour
while cold users are essentially absent from training.
"""

import sys
import time

from bigfair.synthetic import SyntheticConfig, generate_corpus
from bigfair.model import config_by_tag
from bigfair.train import TrainConfig, train

CORPUS = dict(
    num_users=10_000,
    num_news=1_000,
    vocab_size=400,
    num_topics=12,
    topic_token_concentration=0.03,
    user_interest_concentration=0.3,
    interest_temperature=0.05,
    title_min_tokens=4,
    title_max_tokens=8,
    train_impressions_rate=0.1,
    eval_impressions_per_user=8,
    cold_fraction=0.11,
    master_seed=5,
)

ARMS = {
    "big": dict(capacity="big", batch_size=32, learning_rate=1.5e-3,
                max_steps=1200, eval_interval=50),
    "small": dict(capacity="small", batch_size=32, learning_rate=1.5e-3,
                  max_steps=400, eval_interval=50),
    "bighot": dict(capacity="big", batch_size=32, learning_rate=3e-3,
                   max_steps=1200, eval_interval=50),
}


def main() -> None:
    which = sys.argv[1:] or ["big"]
    cfg = SyntheticConfig(**CORPUS)
    t0 = time.time()
    ds = generate_corpus(cfg).datasets()
    print(f"corpus ready in {time.time() - t0:.1f}s: "
          f"{len(ds.train_samples)} train samples, "
          f"{len(ds.eval_impressions)} eval impressions", flush=True)
    n_heavy_samples = sum(
        1 for s in ds.train_samples if len(s.user.history) > 5)
    print(f"  heavy-user share of train pool: "
          f"{n_heavy_samples / len(ds.train_samples):.3f}", flush=True)

    for name in which:
        arm = dict(ARMS[name])
        capacity = arm.pop("capacity")
        mc = config_by_tag(capacity, ds.news.vocab_size)
        tc = TrainConfig(master_seed=1, early_stop_patience=10_000,
                         checkpoint_mode="none", **arm)
        t0 = time.time()
        records = train(ds, mc, tc, f"/tmp/lowrate_{name}")
        print(f"{name} ({capacity}): {time.time() - t0:.1f}s", flush=True)
        for r in records:
            print(f"  step {r.step:4d} overall={r.report.overall_auc:.4f} "
                  f"cold={r.report.cold_auc:.4f} "
                  f"heavy={r.report.heavy_auc:.4f}", flush=True)


if __name__ == "__main__":
    main()
