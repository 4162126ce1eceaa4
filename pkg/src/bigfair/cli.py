"""Command-line entry points.

    bigfair gen-data --config run.cfg --out data/
    bigfair train    --config run.cfg --out runs/a [--data data/] [--seed 7]
    bigfair eval     --config run.cfg --out runs/a [--data data/]
    bigfair sweep    --config run.cfg --out sweeps/a [--p-list 0,0.25,0.5]
                     [--seeds 3] [--jobs 2] [--data data/]
    bigfair report   --out runs/a [--svg]

gen-data writes a synthetic corpus in MIND-style TSV files. train runs one
training job (synthetic data generated on the fly unless --data points at
a gen-data directory). eval re-scores a finished run's checkpoints and
writes unfairness.csv and buckets.csv next to them. sweep trains the
distillation branch across a list of behavior-dropping ratios and writes
sweep.csv. report turns a run's metrics.csv into a text summary and,
with --svg, checkpoint-curve charts.

Commands exit 0 only after their artifacts are fully written.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

from . import mind
from . import rng as rng_mod
from .checkpoint import load_checkpoint
from .config import ConfigError, RunConfig, load_config, write_resolved_config
from .datatypes import Datasets, NewsStore
from .evaluation import (
    evaluate,
    unfairness,
    write_buckets_csv,
    write_unfairness_csv,
)
from .synthetic import generate_corpus
from .train import CheckpointRecord, TrainConfig, train


def _load_datasets(cfg: RunConfig, data_dir: str | None) -> Datasets:
    if data_dir is None:
        return generate_corpus(cfg.data).datasets(cfg.data.max_title_len)
    news_path = os.path.join(data_dir, "news.tsv")
    items, vocab = mind.parse_mind_news(news_path,
                                        max_title_len=cfg.data.max_title_len)
    store = NewsStore(items, vocab, cfg.data.max_title_len)
    sample_rng = rng_mod.stream(cfg.train.master_seed, "sampling")
    train_data = mind.parse_mind_behaviors(
        os.path.join(data_dir, "behaviors_train.tsv"), store, sample_rng,
        k=cfg.train.k, max_history_len=cfg.data.max_history_len)
    eval_data = mind.parse_mind_behaviors(
        os.path.join(data_dir, "behaviors_eval.tsv"), store, sample_rng,
        k=cfg.train.k, max_history_len=cfg.data.max_history_len)
    users = {u.user_id: u for u in train_data.users}
    users.update((u.user_id, u) for u in eval_data.users)
    return Datasets(
        news=store,
        users=list(users.values()),
        train_samples=train_data.samples,
        eval_impressions=eval_data.impressions,
        stats={
            "train_lines": train_data.report.lines,
            "eval_lines": eval_data.report.lines,
            "train_samples": len(train_data.samples),
            "eval_impressions": len(eval_data.impressions),
        },
    )


def _cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.data.master_seed = args.seed
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    corpus = generate_corpus(cfg.data)
    mind.write_news(corpus.news, corpus.vocab, os.path.join(out, "news.tsv"))
    mind.write_behaviors(corpus.train_impressions,
                         os.path.join(out, "behaviors_train.tsv"))
    mind.write_behaviors(corpus.eval_impressions,
                         os.path.join(out, "behaviors_eval.tsv"))
    with open(os.path.join(out, "gen_manifest"), "w", encoding="utf-8") as fh:
        fh.write("schema_version=1\n")
        for key, value in sorted(corpus.stats.items()):
            fh.write(f"stats.{key}={value}\n")
    write_resolved_config(cfg, os.path.join(out, "resolved_config"))
    print(f"wrote corpus ({corpus.stats['num_users']} users, "
          f"{corpus.stats['num_news']} news) to {out}")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.data.master_seed = args.seed
        cfg.train.master_seed = args.seed
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    datasets = _load_datasets(cfg, args.data)
    model_cfg = cfg.model_config(datasets.news.vocab_size)
    write_resolved_config(cfg, os.path.join(out, "resolved_config"))
    records = train(datasets, model_cfg, cfg.train, out)
    _write_record_summary(records, model_cfg.capacity_tag,
                          cfg.train.master_seed, out)
    if args.svg:
        _write_curves_svg(os.path.join(out, "metrics.csv"),
                          os.path.join(out, "curves.svg"))
    best = max(records, key=lambda r: r.report.overall_auc)
    print(f"trained {len(records)} checkpoints; best overall AUC "
          f"{best.report.overall_auc:.4f} at step {best.step}; outputs in {out}")
    return 0


def _write_record_summary(records: list[CheckpointRecord], tag: str,
                          seed: int, out: str) -> None:
    result = unfairness(records)
    write_unfairness_csv(os.path.join(out, "unfairness.csv"),
                         [{"model_tag": tag, "seed": seed, "result": result}])
    best = max(records, key=lambda r: r.report.overall_auc)
    write_buckets_csv(os.path.join(out, "buckets.csv"), best.report)


def _cmd_eval(args) -> int:
    cfg = load_config(args.config)
    out = args.out or cfg.out_dir
    paths = sorted(
        os.path.join(out, name) for name in os.listdir(out)
        if name.startswith("checkpoint_") and name.endswith(".bin")
    )
    if not paths:
        print(f"no checkpoint_*.bin files in {out}", file=sys.stderr)
        return 1
    datasets = _load_datasets(cfg, args.data)
    records = []
    tag = None
    for path in paths:
        params = load_checkpoint(path)
        tag = tag or params.cfg.capacity_tag
        step = int(os.path.basename(path)[len("checkpoint_"):-len(".bin")])
        report = evaluate(params, datasets.eval_impressions, datasets.news,
                          cold_threshold=cfg.cold_threshold,
                          include_pooled=cfg.include_pooled)
        records.append(CheckpointRecord(step, path, report))
        print(f"step {step}: overall={report.overall_auc:.4f} "
              f"cold={report.cold_auc:.4f} heavy={report.heavy_auc:.4f}")
    _write_record_summary(records, tag, cfg.train.master_seed, out)
    print(f"wrote unfairness.csv and buckets.csv to {out}")
    return 0


def _sweep_cell(cell) -> dict:
    cfg_path, data_dir, out_root, p, seed = cell
    cfg = load_config(cfg_path)
    cfg.train.p = p
    cfg.train.bigfair_enabled = p > 0.0
    cfg.train.master_seed = seed
    cfg.data.master_seed = seed if data_dir is None else cfg.data.master_seed
    datasets = _load_datasets(cfg, data_dir)
    out = os.path.join(out_root, f"p{p:g}_seed{seed}")
    os.makedirs(out, exist_ok=True)
    records = train(datasets, cfg.model_config(datasets.news.vocab_size),
                    cfg.train, out)
    result = unfairness(records)
    best = max(records, key=lambda r: r.report.overall_auc)
    return {
        "p": p,
        "seed": seed,
        "best_overall_auc": best.report.overall_auc,
        "cold_auc_at_best_overall": best.report.cold_auc,
        "heavy_auc_at_best_overall": best.report.heavy_auc,
        "unfairness": result.unfairness,
    }


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    p_values = ([float(tok) for tok in args.p_list.split(",") if tok.strip()]
                if args.p_list else cfg.p_values())
    seeds = [cfg.train.master_seed + i for i in range(args.seeds)]
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    cells = [(args.config, args.data, out, p, seed)
             for p in p_values for seed in seeds]
    if args.jobs > 1:
        import multiprocessing as mp

        with mp.get_context("spawn").Pool(args.jobs) as pool:
            rows = pool.map(_sweep_cell, cells)
    else:
        rows = [_sweep_cell(cell) for cell in cells]

    fields = ["p", "seed", "best_overall_auc", "cold_auc_at_best_overall",
              "heavy_auc_at_best_overall", "unfairness"]
    with open(os.path.join(out, "sweep.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([row["p"], row["seed"],
                             repr(row["best_overall_auc"]),
                             repr(row["cold_auc_at_best_overall"]),
                             repr(row["heavy_auc_at_best_overall"]),
                             repr(row["unfairness"])])
        for p in p_values:
            group = [row for row in rows if row["p"] == p]
            n = len(group)
            writer.writerow([
                p, "mean",
                repr(math.fsum(r["best_overall_auc"] for r in group) / n),
                repr(math.fsum(r["cold_auc_at_best_overall"] for r in group) / n),
                repr(math.fsum(r["heavy_auc_at_best_overall"] for r in group) / n),
                repr(math.fsum(r["unfairness"] for r in group) / n),
            ])
    if args.svg:
        _write_sweep_svg(rows, p_values, os.path.join(out, "sweep.svg"))
    print(f"swept {len(cells)} cells; wrote {os.path.join(out, 'sweep.csv')}")
    return 0


def _read_metrics(path) -> dict[str, list[float]]:
    cols: dict[str, list[float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            for key, value in row.items():
                if value != "":
                    cols.setdefault(key, []).append(float(value))
    return cols


def _write_curves_svg(metrics_path, svg_path) -> None:
    from .svg import write_chart

    cols = _read_metrics(metrics_path)
    steps = cols["step"]
    series = {}
    for name in ("overall_auc", "heavy_auc", "cold_auc"):
        if name in cols and len(cols[name]) == len(steps):
            series[name.replace("_auc", "")] = (steps, cols[name])
    write_chart(svg_path, series, "AUC by checkpoint", "step", "AUC")


def _write_sweep_svg(rows, p_values, svg_path) -> None:
    from .svg import write_chart

    means = []
    for p in p_values:
        group = [r["unfairness"] for r in rows if r["p"] == p]
        means.append(math.fsum(group) / len(group))
    write_chart(svg_path, {"unfairness": (list(p_values), means)},
                "Unfairness by behavior-dropping ratio", "P", "unfairness")


def _cmd_report(args) -> int:
    out = args.out
    metrics_path = os.path.join(out, "metrics.csv")
    if not os.path.exists(metrics_path):
        print(f"no metrics.csv in {out}", file=sys.stderr)
        return 1
    cols = _read_metrics(metrics_path)
    lines = [f"checkpoints: {len(cols['step'])}"]
    for name in ("overall_auc", "heavy_auc", "cold_auc"):
        if name not in cols:
            continue
        values = cols[name]
        best = max(range(len(values)), key=values.__getitem__)
        lines.append(f"best {name}: {values[best]:.4f} at step "
                     f"{int(cols['step'][best])}")
    text = "\n".join(lines) + "\n"
    with open(os.path.join(out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    if args.svg:
        _write_curves_svg(metrics_path, os.path.join(out, "curves.svg"))
    print(text, end="")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bigfair")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False, seed=False, svg=False):
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--out", default=None,
                       help="output directory (default: out_dir from config)")
        if data:
            p.add_argument("--data", default=None,
                           help="gen-data directory; omit to generate in memory")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="override the master seed")
        if svg:
            p.add_argument("--svg", action="store_true",
                           help="also write chart files")

    gen = sub.add_parser("gen-data", help="write a synthetic corpus as TSV")
    common(gen, seed=True)
    gen.set_defaults(fn=_cmd_gen_data)

    tr = sub.add_parser("train", help="run one training job")
    common(tr, data=True, seed=True, svg=True)
    tr.set_defaults(fn=_cmd_train)

    ev = sub.add_parser("eval", help="re-evaluate a run's checkpoints")
    common(ev, data=True)
    ev.set_defaults(fn=_cmd_eval)

    sw = sub.add_parser("sweep", help="train across behavior-dropping ratios")
    common(sw, data=True, svg=True)
    sw.add_argument("--p-list", default=None,
                    help="comma-separated ratios (default: eval.p_list)")
    sw.add_argument("--seeds", type=int, default=3,
                    help="seeds per ratio, counted up from train.master_seed")
    sw.add_argument("--jobs", type=int, default=1,
                    help="parallel training processes")
    sw.set_defaults(fn=_cmd_sweep)

    rep = sub.add_parser("report", help="summarize a finished run")
    rep.add_argument("--out", required=True, help="run directory")
    rep.add_argument("--svg", action="store_true",
                     help="also write chart files")
    rep.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
