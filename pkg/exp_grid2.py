import sys
import time
from collections import Counter

from bigfair.evaluation import auc
from bigfair.synthetic import SyntheticConfig, generate_corpus
from bigfair.model import big_config, small_config
from bigfair.train import TrainConfig, train

sc = SyntheticConfig(num_users=10000, num_news=1200, vocab_size=400,
                     num_topics=24, topic_token_concentration=0.03,
                     user_interest_concentration=0.3, interest_temperature=0.05,
                     title_min_tokens=4, title_max_tokens=8,
                     eval_impressions_per_user=8, master_seed=5)
corpus = generate_corpus(sc)
ds = corpus.datasets()
print(f"corpus ready cold_ratio={corpus.stats['cold_ratio']:.4f}", flush=True)

topic = {n.news_id: n.topic_id for n in corpus.news}
strata = {"overall": [], "cold": [], "heavy": []}
for imp in ds.eval_impressions:
    hist = Counter(topic[nid] for nid in imp.user.history)
    total = sum(hist.values())
    scores = [hist.get(topic[nid], 0) / total for nid in imp.candidates]
    value = auc(scores, imp.labels)
    strata["overall"].append(value)
    strata["cold" if len(imp.user.history) <= 5 else "heavy"].append(value)
for name, vals in strata.items():
    print(f"oracle {name}: {sum(vals)/len(vals):.4f} (n={len(vals)})", flush=True)

arms = [(f"big24_lr{lr:g}", big_config,
         dict(max_steps=500, batch_size=64, learning_rate=lr))
        for lr in (1.5e-3, 3e-3)]
if len(sys.argv) > 1 and sys.argv[1] == "small":
    arms = [("small24_lr1.5e-3", small_config,
             dict(max_steps=170, batch_size=64, learning_rate=1.5e-3))]

for tag, fn, kw in arms:
    tc = TrainConfig(eval_interval=25, master_seed=1, checkpoint_mode="none",
                     early_stop_patience=10_000, **kw)
    t0 = time.time()
    records = train(ds, fn(ds.news.vocab_size), tc, f"/tmp/grid_{tag}")
    print(f"{tag}: {time.time()-t0:.1f}s", flush=True)
    for rec in records:
        r = rec.report
        print(f"  step {rec.step:4d} overall={r.overall_auc:.4f} "
              f"cold={r.cold_auc:.4f} heavy={r.heavy_auc:.4f}", flush=True)
