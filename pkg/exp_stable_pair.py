import time

from bigfair.synthetic import SyntheticConfig, generate_corpus
from bigfair.model import big_config, small_config
from bigfair.train import TrainConfig, train

sc = SyntheticConfig(num_users=4000, num_news=2000, vocab_size=600,
                     num_topics=12, topic_token_concentration=0.03,
                     user_interest_concentration=0.3, interest_temperature=0.05,
                     master_seed=5)
ds = generate_corpus(sc).datasets()
for tag, fn in (("big", big_config), ("small", small_config)):
    mc = fn(ds.news.vocab_size)
    tc = TrainConfig(learning_rate=1.5e-3, batch_size=64, max_steps=1200,
                     eval_interval=100, bigfair_enabled=False, master_seed=1,
                     checkpoint_mode="none", early_stop_patience=20)
    t0 = time.time()
    train(ds, mc, tc, f"/tmp/stable_{tag}")
    print(f"{tag}: {time.time()-t0:.0f}s", flush=True)
    for row in open(f"/tmp/stable_{tag}/metrics.csv").read().splitlines()[1:]:
        c = row.split(",")
        print(f"  step={c[0]:>4} loss={c[2][:7]} overall={c[4][:6]} "
              f"heavy={c[5][:6]} cold={c[6][:6]}", flush=True)
print("DONE", flush=True)
