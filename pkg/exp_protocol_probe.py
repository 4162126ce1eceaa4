import time
from collections import Counter

from bigfair.evaluation import auc
from bigfair.synthetic import SyntheticConfig, generate_corpus
from bigfair.model import big_config, small_config
from bigfair.train import TrainConfig, train

t0 = time.time()
sc = SyntheticConfig(num_users=10000, num_news=1200, vocab_size=400,
                     num_topics=10, topic_token_concentration=0.03,
                     user_interest_concentration=0.3, interest_temperature=0.05,
                     title_min_tokens=4, title_max_tokens=8,
                     eval_impressions_per_user=8, master_seed=5)
corpus = generate_corpus(sc)
ds = corpus.datasets()
print(f"gen: {time.time()-t0:.1f}s samples={len(ds.train_samples)} "
      f"eval={len(ds.eval_impressions)} cold_ratio={corpus.stats['cold_ratio']:.4f}",
      flush=True)

# generative oracle: score candidates by the user's historical topic mix
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

# step timing for each protocol arm
arms = [
    ("big", big_config, dict(batch_size=64, learning_rate=3e-3)),
    ("small", small_config, dict(batch_size=64, learning_rate=3e-3)),
    ("bigfair", big_config, dict(batch_size=64, learning_rate=3e-3,
                                 bigfair_enabled=True, p=0.5)),
]
for tag, fn, kw in arms:
    tc = TrainConfig(max_steps=10, eval_interval=1000, master_seed=1,
                     checkpoint_mode="none", **kw)
    t0 = time.time()
    train(ds, fn(ds.news.vocab_size), tc, f"/tmp/probe_{tag}")
    print(f"{tag}: 10 steps + 1 eval in {time.time()-t0:.1f}s", flush=True)
