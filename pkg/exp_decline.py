import sys
import time

from bigfair.synthetic import SyntheticConfig, generate_corpus
from bigfair.model import big_config
from bigfair.train import TrainConfig, train

ARMS = {
    # the 4k-user setting that showed a 2.3-point cold decline before the
    # slate sampler changed: confirm it still declines under the new draws
    "old4k": (dict(num_users=4000, num_news=2000, vocab_size=600,
                   num_topics=12, topic_token_concentration=0.03,
                   user_interest_concentration=0.3, interest_temperature=0.05,
                   eval_impressions_per_user=8, master_seed=5),
              dict(max_steps=300, learning_rate=3e-3, eval_interval=25)),
    # protocol candidate: cheap corpus, 16 topics, long run at 10k users
    "cheap16long": (dict(num_users=10000, num_news=1200, vocab_size=400,
                         num_topics=16, topic_token_concentration=0.03,
                         user_interest_concentration=0.3,
                         interest_temperature=0.05, title_min_tokens=4,
                         title_max_tokens=8, eval_impressions_per_user=8,
                         master_seed=5),
                    dict(max_steps=1000, learning_rate=1.5e-3,
                         eval_interval=50)),
}

for which in sys.argv[1:]:
    data_kw, train_kw = ARMS[which]
    ds = generate_corpus(SyntheticConfig(**data_kw)).datasets()
    print(f"{which} corpus ready", flush=True)
    tc = TrainConfig(batch_size=64, master_seed=1, checkpoint_mode="none",
                     early_stop_patience=10_000, **train_kw)
    t0 = time.time()
    records = train(ds, big_config(ds.news.vocab_size), tc, f"/tmp/dec_{which}")
    print(f"{which}: {time.time()-t0:.1f}s", flush=True)
    for rec in records:
        r = rec.report
        print(f"  step {rec.step:4d} overall={r.overall_auc:.4f} "
              f"cold={r.cold_auc:.4f} heavy={r.heavy_auc:.4f}", flush=True)
