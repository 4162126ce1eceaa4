import time
import sys

from bigfair.synthetic import SyntheticConfig, generate_corpus
from bigfair.model import ModelConfig
from bigfair.train import TrainConfig, train
from bigfair.evaluation import evaluate, unfairness

t0 = time.time()
sc = SyntheticConfig(num_users=200, num_news=300, vocab_size=400,
                     master_seed=7, eval_impressions_per_user=2)
corpus = generate_corpus(sc)
ds = corpus.datasets()
print(f"corpus: {time.time()-t0:.2f}s stats={corpus.stats}")

mc = ModelConfig(vocab_size=ds.news.vocab_size, token_embed_dim=32,
                 hidden_dim=32, num_heads=2, num_layers=1, dropout_rate=0.2,
                 max_title_len=sc.max_title_len, max_history_len=sc.max_history_len,
                 query_dim=16, capacity_tag="small")
tc = TrainConfig(p=0.5, k=4, learning_rate=1e-3, batch_size=16, max_steps=60,
                 eval_interval=20, bigfair_enabled=True, master_seed=3)
t0 = time.time()
records = train(ds, mc, tc, "/tmp/smoke_run")
dt = time.time() - t0
print(f"train: {dt:.2f}s  ({dt/60:.3f}s/step over 60 steps)")
for r in records:
    print(f"  step={r.step} overall={r.report.overall_auc:.4f} "
          f"cold={r.report.cold_auc} heavy={r.report.heavy_auc}")
u = unfairness(records)
print("unfairness:", u)
print(open("/tmp/smoke_run/metrics.csv").read())
