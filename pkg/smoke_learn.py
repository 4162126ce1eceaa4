import time

from bigfair.synthetic import SyntheticConfig, generate_corpus
from bigfair.model import ModelConfig
from bigfair.train import TrainConfig, train

sc = SyntheticConfig(num_users=400, num_news=400, vocab_size=600,
                     master_seed=11, eval_impressions_per_user=2)
corpus = generate_corpus(sc)
ds = corpus.datasets()
print("stats:", corpus.stats)

mc = ModelConfig(vocab_size=ds.news.vocab_size, token_embed_dim=48,
                 hidden_dim=48, num_heads=2, num_layers=1, dropout_rate=0.2,
                 max_title_len=sc.max_title_len, max_history_len=sc.max_history_len,
                 query_dim=24, capacity_tag="small")
tc = TrainConfig(p=0.5, k=4, learning_rate=3e-3, batch_size=32, max_steps=600,
                 eval_interval=100, bigfair_enabled=False, master_seed=3,
                 checkpoint_mode="none")
t0 = time.time()
records = train(ds, mc, tc, "/tmp/smoke_learn")
dt = time.time() - t0
print(f"train: {dt:.1f}s ({1000*dt/600:.0f} ms/step)")
for r in records:
    print(f"  step={r.step:4d} overall={r.report.overall_auc:.4f} "
          f"cold={r.report.cold_auc:.4f} heavy={r.report.heavy_auc:.4f}")
