import sys
import time

from bigfair.synthetic import SyntheticConfig, generate_corpus
from bigfair.model import big_config, small_config
from bigfair.train import TrainConfig, train

sc = SyntheticConfig(num_users=10000, num_news=1200, vocab_size=400,
                     num_topics=10, topic_token_concentration=0.03,
                     user_interest_concentration=0.3, interest_temperature=0.05,
                     title_min_tokens=4, title_max_tokens=8,
                     eval_impressions_per_user=8, master_seed=5)
ds = generate_corpus(sc).datasets()
print("corpus ready", flush=True)

arms = []
for lr in (1e-3, 1.5e-3, 2e-3):
    arms.append((f"big_lr{lr:g}", big_config,
                 dict(max_steps=400, batch_size=64, learning_rate=lr)))
if len(sys.argv) > 1 and sys.argv[1] == "small":
    arms = [(f"small_lr{lr:g}", small_config,
             dict(max_steps=160, batch_size=64, learning_rate=lr))
            for lr in (1e-3, 1.5e-3)]

for tag, fn, kw in arms:
    tc = TrainConfig(eval_interval=25, master_seed=1, checkpoint_mode="none",
                     **kw)
    t0 = time.time()
    records = train(ds, fn(ds.news.vocab_size), tc, f"/tmp/grid_{tag}")
    print(f"{tag}: {time.time()-t0:.1f}s", flush=True)
    for rec in records:
        r = rec.report
        print(f"  step {rec.step:4d} overall={r.overall_auc:.4f} "
              f"cold={r.cold_auc:.4f} heavy={r.heavy_auc:.4f}", flush=True)
