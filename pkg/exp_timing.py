import time

from bigfair.synthetic import SyntheticConfig, generate_corpus
from bigfair.model import big_config, small_config
from bigfair.train import TrainConfig, train
from bigfair.evaluation import evaluate

t0 = time.time()
sc = SyntheticConfig(num_users=10000, num_news=3000, vocab_size=600,
                     num_topics=12, topic_token_concentration=0.03,
                     user_interest_concentration=0.3, interest_temperature=0.05,
                     eval_impressions_per_user=8, master_seed=5)
ds = generate_corpus(sc).datasets()
print(f"gen: {time.time()-t0:.1f}s train_samples={len(ds.train_samples)} "
      f"eval_imps={len(ds.eval_impressions)}", flush=True)

for tag, fn in (("big", big_config), ("small", small_config)):
    mc = fn(ds.news.vocab_size)
    for bs in (32, 64):
        tc = TrainConfig(learning_rate=1.5e-3, batch_size=bs, max_steps=12,
                         eval_interval=1000, bigfair_enabled=False,
                         master_seed=1, checkpoint_mode="none")
        t0 = time.time()
        train(ds, mc, tc, f"/tmp/timing_{tag}_{bs}")
        dt = time.time() - t0
        print(f"{tag} bs={bs}: total {dt:.1f}s", flush=True)

from bigfair import rng as rng_mod
from bigfair.model import init_params
params = init_params(big_config(ds.news.vocab_size), rng_mod.stream(0, "init"))
t0 = time.time()
evaluate(params, ds.eval_impressions, ds.news)
print(f"eval big 80k imps: {time.time()-t0:.1f}s", flush=True)
