import sys
import time

from bigfair.synthetic import SyntheticConfig, generate_corpus
from bigfair.model import big_config
from bigfair.train import TrainConfig, train

# arm A: the corpus shape that showed a strong cold decline at 4k users,
# now at 10k users (titles 6-14 default, vocab 600, 12 topics, 3000 news)
SHAPES = {
    "oldshape10k": dict(num_users=10000, num_news=3000, vocab_size=600,
                        num_topics=12, topic_token_concentration=0.03,
                        user_interest_concentration=0.3,
                        interest_temperature=0.05,
                        eval_impressions_per_user=8, master_seed=5),
    # arm B: the cheap short-title corpus at a 16-topic difficulty midpoint
    "cheap16": dict(num_users=10000, num_news=1200, vocab_size=400,
                    num_topics=16, topic_token_concentration=0.03,
                    user_interest_concentration=0.3,
                    interest_temperature=0.05,
                    title_min_tokens=4, title_max_tokens=8,
                    eval_impressions_per_user=8, master_seed=5),
}

which = sys.argv[1] if len(sys.argv) > 1 else "oldshape10k"
ds = generate_corpus(SyntheticConfig(**SHAPES[which])).datasets()
print(f"{which} corpus ready", flush=True)

tc = TrainConfig(max_steps=300, batch_size=64, learning_rate=3e-3,
                 eval_interval=25, master_seed=1, checkpoint_mode="none",
                 early_stop_patience=10_000)
t0 = time.time()
records = train(ds, big_config(ds.news.vocab_size), tc, f"/tmp/hyp_{which}")
print(f"{which}: {time.time()-t0:.1f}s", flush=True)
for rec in records:
    r = rec.report
    print(f"  step {rec.step:4d} overall={r.overall_auc:.4f} "
          f"cold={r.cold_auc:.4f} heavy={r.heavy_auc:.4f}", flush=True)
