"""Command line surface: artifacts, determinism, exit codes."""

import csv
import xml.dom.minidom

import pytest

from bigfair.cli import main

TINY_CFG = """\
schema_version = 1
data.num_users = 40
data.num_news = 50
data.vocab_size = 100
data.num_topics = 4
data.master_seed = 11
data.eval_impressions_per_user = 1
model.capacity = small
model.token_embed_dim = 8
model.hidden_dim = 8
model.num_heads = 2
model.num_layers = 1
model.query_dim = 4
train.batch_size = 8
train.max_steps = 4
train.eval_interval = 2
train.learning_rate = 0.001
train.master_seed = 3
"""


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv("BIGFAIR_SEED", raising=False)


@pytest.fixture(scope="module")
def cfg_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "run.cfg"
    path.write_text(TINY_CFG)
    return str(path)


def run(*argv):
    return main(list(argv))


class TestGenData:
    def test_writes_corpus_files(self, cfg_file, tmp_path):
        out = tmp_path / "data"
        assert run("gen-data", "--config", cfg_file, "--out", str(out)) == 0
        for name in ("news.tsv", "behaviors_train.tsv", "behaviors_eval.tsv",
                     "gen_manifest", "resolved_config"):
            assert (out / name).exists(), name

    def test_rerun_is_bit_identical(self, cfg_file, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run("gen-data", "--config", cfg_file, "--out", str(a))
        run("gen-data", "--config", cfg_file, "--out", str(b))
        for name in ("news.tsv", "behaviors_train.tsv", "behaviors_eval.tsv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_seed_flag_changes_corpus(self, cfg_file, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run("gen-data", "--config", cfg_file, "--out", str(a))
        run("gen-data", "--config", cfg_file, "--out", str(b), "--seed", "99")
        assert (a / "behaviors_train.tsv").read_bytes() != \
               (b / "behaviors_train.tsv").read_bytes()


class TestTrain:
    def test_in_memory_run_writes_artifacts(self, cfg_file, tmp_path):
        out = tmp_path / "run"
        assert run("train", "--config", cfg_file, "--out", str(out),
                   "--svg") == 0
        for name in ("metrics.csv", "unfairness.csv", "buckets.csv",
                     "run_manifest", "resolved_config", "curves.svg"):
            assert (out / name).exists(), name
        rows = list(csv.DictReader(open(out / "metrics.csv")))
        assert [r["step"] for r in rows] == ["0", "2", "4"]
        xml.dom.minidom.parse(str(out / "curves.svg"))

    def test_tsv_round_trip_is_deterministic(self, cfg_file, tmp_path):
        data = tmp_path / "data"
        run("gen-data", "--config", cfg_file, "--out", str(data))
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("train", "--config", cfg_file, "--data", str(data),
                   "--out", str(a)) == 0
        assert run("train", "--config", cfg_file, "--data", str(data),
                   "--out", str(b)) == 0
        assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()

    def test_checkpoints_enumerate_eval_steps(self, cfg_file, tmp_path):
        out = tmp_path / "run"
        run("train", "--config", cfg_file, "--out", str(out))
        names = sorted(p.name for p in out.glob("checkpoint_*.bin"))
        assert names == ["checkpoint_000000.bin", "checkpoint_000002.bin",
                         "checkpoint_000004.bin"]


class TestEvalAndReport:
    def test_eval_reproduces_train_unfairness(self, cfg_file, tmp_path):
        out = tmp_path / "run"
        run("train", "--config", cfg_file, "--out", str(out))
        from_train = (out / "unfairness.csv").read_bytes()
        (out / "unfairness.csv").unlink()
        assert run("eval", "--config", cfg_file, "--out", str(out)) == 0
        assert (out / "unfairness.csv").read_bytes() == from_train

    def test_report_summarizes_metrics(self, cfg_file, tmp_path, capsys):
        out = tmp_path / "run"
        run("train", "--config", cfg_file, "--out", str(out))
        assert run("report", "--out", str(out)) == 0
        text = (out / "report.txt").read_text()
        assert "best overall_auc" in text
        assert "checkpoints: 3" in text


class TestSweep:
    def test_cells_and_means(self, cfg_file, tmp_path):
        out = tmp_path / "sweep"
        assert run("sweep", "--config", cfg_file, "--out", str(out),
                   "--p-list", "0.0,0.5", "--seeds", "2") == 0
        rows = list(csv.DictReader(open(out / "sweep.csv")))
        cells = [(r["p"], r["seed"]) for r in rows]
        assert ("0.0", "3") in cells and ("0.5", "4") in cells
        assert ("0.0", "mean") in cells and ("0.5", "mean") in cells
        assert len(rows) == 6

    def test_parallel_matches_serial(self, cfg_file, tmp_path):
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        run("sweep", "--config", cfg_file, "--out", str(serial),
            "--p-list", "0.0,0.5", "--seeds", "1")
        run("sweep", "--config", cfg_file, "--out", str(parallel),
            "--p-list", "0.0,0.5", "--seeds", "1", "--jobs", "2")
        assert (serial / "sweep.csv").read_bytes() == \
               (parallel / "sweep.csv").read_bytes()


class TestExitCodes:
    def test_unknown_key_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("schema_version=1\ntrain.nope=1\n")
        assert run("train", "--config", str(bad)) == 1
        assert "train.nope" in capsys.readouterr().err

    def test_missing_config_exits_one(self, tmp_path, capsys):
        assert run("train", "--config", str(tmp_path / "absent.cfg")) == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_missing_data_dir_exits_one(self, cfg_file, tmp_path, capsys):
        assert run("train", "--config", cfg_file,
                   "--data", str(tmp_path / "nowhere")) == 1
