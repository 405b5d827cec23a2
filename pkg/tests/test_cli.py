import json
from pathlib import Path

import pytest

from hgcn_absa.cli import main
from hgcn_absa.corpus import load_dataset

DATA = Path(__file__).resolve().parents[1] / "data"


def run(*argv) -> int:
    return main(list(argv))


@pytest.fixture(scope="module")
def toy_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("toy") / "toy.json"
    assert run("gen-toy", "--out", str(path), "--size", "4", "--seed", "3") == 0
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory, toy_file):
    """A quickly trained checkpoint on a tiny corpus and config."""
    out_dir = tmp_path_factory.mktemp("ckpt")
    ckpt = out_dir / "model.json"
    config = out_dir / "config.json"
    config.write_text(json.dumps({
        "embedding_dim": 8, "hidden_dim": 3, "label_dim": 4, "relation_dim": 3,
        "cgcn_layers": 1, "dgcn_layers": 1, "epochs": 2, "batch_size": 4,
        "seed": 5,
    }))
    code = run("train", "--data", str(toy_file), "--config", str(config),
               "--out", str(ckpt))
    assert code == 0
    return toy_file, ckpt


def test_gen_toy_seeded_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("gen-toy", "--out", str(a), "--size", "50", "--seed", "7") == 0
    assert run("gen-toy", "--out", str(b), "--size", "50", "--seed", "7") == 0
    assert a.read_bytes() == b.read_bytes()


def test_train_writes_checkpoint_and_epoch_log(trained):
    toy_file, ckpt = trained
    assert ckpt.exists()
    log_path = ckpt.with_suffix(".log.jsonl")
    records = [json.loads(line) for line in log_path.read_text().splitlines()]
    assert len(records) == 2
    assert records[0]["epoch"] == 1
    assert set(records[0]) == {"epoch", "loss", "accuracy", "scope_f1"}


def test_eval_prints_metrics_json(trained, capsys):
    toy_file, ckpt = trained
    assert run("eval", "--data", str(toy_file), "--ckpt", str(ckpt)) == 0
    out = capsys.readouterr().out
    metrics = json.loads(out)
    assert "accuracy" in metrics and "by_target_count" in metrics


def test_eval_matches_in_process_metrics_after_reload(trained, capsys):
    from hgcn_absa.checkpoint import load_checkpoint
    from hgcn_absa.training import evaluate

    toy_file, ckpt = trained
    assert run("eval", "--data", str(toy_file), "--ckpt", str(ckpt)) == 0
    via_cli = json.loads(capsys.readouterr().out)
    params, config = load_checkpoint(ckpt)
    direct = evaluate(load_dataset(toy_file), params, config)
    assert via_cli == json.loads(json.dumps(direct))  # identical after JSON round trip


def test_predict_writes_instances(trained, tmp_path):
    toy_file, ckpt = trained
    out = tmp_path / "pred.json"
    assert run("predict", "--data", str(toy_file), "--ckpt", str(ckpt),
               "--out", str(out)) == 0
    rows = json.loads(out.read_text())
    corpus = load_dataset(toy_file)
    assert len(rows) == sum(len(s.targets) for s in corpus)
    first = rows[0]
    assert set(first) >= {"sentence", "target", "bio", "scope_span",
                          "distribution", "polarity"}
    assert abs(sum(first["distribution"].values()) - 1.0) < 1e-9


def test_annotate_auto_worked_example(tmp_path):
    out = tmp_path / "annotated.json"
    assert run("annotate-auto", "--data", str(DATA / "demo.json"),
               "--lexicon", str(DATA / "lexicon.txt"), "--out", str(out)) == 0
    sentences = load_dataset(out)
    food = sentences[0].targets[0]
    assert food.scope_bio == ["B", "I", "O", "O", "O", "O", "O", "O"]
    assert food.scope_provenance == "auto"
    service = sentences[0].targets[1]
    assert service.scope_bio == ["O", "O", "O", "B", "I", "I", "I", "O"]


def test_annotate_auto_does_not_mutate_input(tmp_path):
    src = tmp_path / "in.json"
    src.write_bytes((DATA / "demo.json").read_bytes())
    before = src.read_bytes()
    assert run("annotate-auto", "--data", str(src),
               "--lexicon", str(DATA / "lexicon.txt"),
               "--out", str(tmp_path / "out.json")) == 0
    assert src.read_bytes() == before


def test_dump_attention(trained, tmp_path):
    toy_file, ckpt = trained
    out = tmp_path / "attention.json"
    assert run("dump-attention", "--data", str(toy_file), "--ckpt", str(ckpt),
               "--sentence", "0", "--out", str(out)) == 0
    payload = json.loads(out.read_text())
    corpus = load_dataset(toy_file)
    n = len(corpus[0].tokens)
    assert payload["words"] == corpus[0].tokens
    assert len(payload["matrix"]) == n
    assert len(payload["matrix"][0]) == len(payload["constituents"])
    for row in payload["matrix"]:
        assert abs(sum(row) - 1.0) < 1e-9


def test_dump_attention_bad_index(trained, tmp_path):
    toy_file, ckpt = trained
    code = run("dump-attention", "--data", str(toy_file), "--ckpt", str(ckpt),
               "--sentence", "999", "--out", str(tmp_path / "x.json"))
    assert code == 1


def test_bad_paths_exit_nonzero(tmp_path):
    assert run("eval", "--data", "missing.json", "--ckpt", "missing.ckpt") == 1
    assert run("train", "--data", "missing.json", "--out", str(tmp_path / "c")) == 1


def test_report_renders_files(trained, tmp_path, capsys):
    toy_file, ckpt = trained
    out_dir = tmp_path / "report"
    log_path = ckpt.with_suffix(".log.jsonl")
    metrics_path = tmp_path / "metrics.json"
    assert run("eval", "--data", str(toy_file), "--ckpt", str(ckpt)) == 0
    metrics_path.write_text(capsys.readouterr().out)
    attention_path = tmp_path / "attention.json"
    assert run("dump-attention", "--data", str(toy_file), "--ckpt", str(ckpt),
               "--sentence", "1", "--out", str(attention_path)) == 0
    assert run("report", "--log", str(log_path), "--metrics", str(metrics_path),
               "--attention", str(attention_path), "--out-dir", str(out_dir)) == 0
    names = {p.name for p in out_dir.iterdir()}
    assert names == {"training_curves.png", "training_curves.csv",
                     "bucket_accuracy.png", "bucket_accuracy.csv",
                     "attention.png", "attention.csv"}
    rows = (out_dir / "training_curves.csv").read_text().splitlines()
    assert rows[0] == "epoch,loss,accuracy,scope_f1"
    assert len(rows) == 3


def test_report_requires_an_input(tmp_path):
    assert run("report", "--out-dir", str(tmp_path / "r")) == 1
