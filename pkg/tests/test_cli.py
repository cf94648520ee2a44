import json

import pytest

from spokenqa import __version__
from spokenqa.cli import log_path, main
from spokenqa.experiment import default_train_overrides
from spokenqa.synthetic import main as write_corpus


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    write_corpus([str(d), "--n-train", "40", "--n-test", "12", "--seed", "1"])
    return d


def run(*argv):
    return main([str(a) for a in argv])


def load(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_unknown_subcommand_is_usage_error(capsys):
    assert run("transcribe") == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(corpus_dir):
    assert run("filter", "--in", corpus_dir / "test.json", "--out", "x", "--fast") == 1


def test_missing_required_flag_is_usage_error():
    assert run("score", "--dataset", "d.json") == 1


def test_missing_file_is_data_error(tmp_path, capsys):
    assert run("filter", "--in", tmp_path / "nope.json", "--out", tmp_path / "o.json") == 2
    assert "error" in capsys.readouterr().err


def test_malformed_dataset_is_data_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"data": [{}]}')
    assert run("filter", "--in", bad, "--out", tmp_path / "o.json") == 2


def test_decompose(tmp_path, capsys):
    lex = tmp_path / "lex.tsv"
    lex.write_text("上\tshang4\n", encoding="utf-8")
    assert run("decompose", "--lexicon", lex, "--text", "上") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["tokens"] == list("shang")
    assert out["_provenance"]["subcommand"] == "decompose"


def test_wer_command(capsys):
    assert run("wer", "--ref", "長江很長", "--hyp", "長將很長") == 0
    assert json.loads(capsys.readouterr().out)["wer"] == 0.25
    assert run("wer", "--ref", "the cat sat", "--hyp", "the cat", "--unit", "word") == 0
    assert json.loads(capsys.readouterr().out)["wer"] == pytest.approx(1 / 3)
    assert run("wer", "--ref", "", "--hyp", "x") == 2


def test_score_perfect_predictions(corpus_dir, tmp_path):
    ds = load(corpus_dir / "test.json")
    preds = {q["id"]: q["answers"][0]["text"]
             for p in ds["data"][0]["paragraphs"] for q in p["qas"]}
    preds["_provenance"] = {"ignored": True}
    (tmp_path / "p.json").write_text(json.dumps(preds, ensure_ascii=False), encoding="utf-8")
    assert run("score", "--dataset", corpus_dir / "test.json", "--predictions",
               tmp_path / "p.json", "--out", tmp_path / "r.json") == 0
    report = load(tmp_path / "r.json")
    assert report["em"] == report["f1"] == 1.0
    assert report["n"] == 12
    assert set(report["_provenance"]["inputs"]) == {"dataset", "predictions"}


def test_score_missing_prediction_is_data_error(corpus_dir, tmp_path):
    (tmp_path / "p.json").write_text("{}")
    assert run("score", "--dataset", corpus_dir / "test.json", "--predictions",
               tmp_path / "p.json", "--out", tmp_path / "r.json") == 2


def test_identity_corruption_has_zero_wer(corpus_dir, tmp_path):
    out = tmp_path / "c.json"
    assert run("corrupt", "--in", corpus_dir / "test.json", "--out", out,
               "--lexicon", corpus_dir / "lexicon.tsv", "--p-sub", 0, "--seed", 3) == 0
    assert run("filter", "--in", out, "--out", tmp_path / "f.json") == 0
    assert run("stats", "--in", tmp_path / "f.json", "--ref", corpus_dir / "test.json",
               "--out", tmp_path / "s.json") == 0
    report = load(tmp_path / "s.json")
    assert report["wer"] == 0.0
    assert report["qa_pairs"] == 12


def test_invalid_probability_is_data_error(corpus_dir, tmp_path):
    assert run("corrupt", "--in", corpus_dir / "test.json", "--out", tmp_path / "c.json",
               "--lexicon", corpus_dir / "lexicon.tsv", "--p-sub", 1.5, "--seed", 0) == 2


def test_pipeline_reruns_are_byte_identical(corpus_dir, tmp_path):
    outputs = []
    for k in range(2):
        d = tmp_path / str(k)
        d.mkdir()
        steps = [
            ("corrupt", "--in", corpus_dir / "test.json", "--out", d / "c.json", "--lexicon",
             corpus_dir / "lexicon.tsv", "--p-sub", 0.3, "--p-del", 0.02, "--seed", 5),
            ("filter", "--in", d / "c.json", "--out", d / "f.json"),
            ("backtranslate", "--in", d / "f.json", "--out", d / "b.json", "--seed", 2,
             "--dropout", 0.05),
            ("merge", "--in", f"{corpus_dir / 'train.json'},{d / 'f.json'}", "--out", d / "m.json"),
            ("stats", "--in", d / "f.json", "--out", d / "s.json"),
            ("train", "--in", d / "m.json", "--lexicon", corpus_dir / "lexicon.tsv",
             "--out", d / "ckpt.json", "--epochs", 2, "--seed", 4, "--lmax", 4),
            ("predict", "--in", d / "f.json", "--ckpt", d / "ckpt.json", "--lexicon",
             corpus_dir / "lexicon.tsv", "--out", d / "p.json"),
            ("score", "--dataset", d / "f.json", "--predictions", d / "p.json",
             "--out", d / "r.json"),
        ]
        for step in steps:
            assert run(*step) == 0, step
        outputs.append({p.name: p.read_bytes() for p in d.iterdir()
                        if not p.name.endswith(".log.jsonl")})
    assert outputs[0] == outputs[1]
    for name, data in outputs[0].items():
        obj = json.loads(data)
        assert obj["_provenance"]["version"] == __version__, name
        assert data.decode("utf-8") == json.dumps(obj, sort_keys=True, ensure_ascii=False,
                                                  indent=1) + "\n" or name == "ckpt.json"
    ckpt = json.loads(outputs[0]["ckpt.json"])
    assert ckpt["_provenance"]["seed"] == 4
    assert ckpt["config"]["seed"] == 4
    assert json.loads(outputs[0]["c.json"])["_provenance"]["seed"] == 5
    merged = json.loads(outputs[0]["m.json"])
    ids = [q["id"] for p in merged["data"][0]["paragraphs"] for q in p["qas"]]
    assert all(i.startswith(("original/", "corrupted/")) for i in ids)


def test_train_writes_log_and_respects_config(corpus_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 5, "lr": 0.01, "word_dim": 8, "use_pinyin": True}))
    ckpt = tmp_path / "model.json"
    assert run("train", "--in", corpus_dir / "train.json", "--lexicon",
               corpus_dir / "lexicon.tsv", "--config", cfg, "--out", ckpt,
               "--epochs", 2, "--no-pinyin") == 0
    obj = load(ckpt)
    assert obj["config"]["epochs"] == 2
    assert obj["config"]["lr"] == 0.01
    assert obj["config"]["word_dim"] == 8
    assert obj["use_pinyin"] is False
    lines = (tmp_path / "model.log.jsonl").read_text().splitlines()
    assert [json.loads(x)["epoch"] for x in lines] == [0, 1]
    assert set(json.loads(lines[0])) == {"epoch", "mean_loss", "seconds"}


def test_log_path():
    assert log_path("out/m.json") == "out/m.log.jsonl"
    assert log_path("out/m.ckpt") == "out/m.ckpt.log.jsonl"


def test_bad_config_is_data_error(corpus_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epoch": 5}))
    assert run("train", "--in", corpus_dir / "train.json", "--lexicon",
               corpus_dir / "lexicon.tsv", "--config", cfg, "--out", tmp_path / "m.json") == 2


def test_training_on_unfiltered_corruption_is_data_error(corpus_dir, tmp_path):
    assert run("corrupt", "--in", corpus_dir / "train.json", "--out", tmp_path / "c.json",
               "--lexicon", corpus_dir / "lexicon.tsv", "--p-sub", 0.1, "--seed", 0) == 0
    assert run("train", "--in", tmp_path / "c.json", "--lexicon", corpus_dir / "lexicon.tsv",
               "--out", tmp_path / "m.json", "--epochs", 1) == 2


def test_pipeline_pinyin_beats_word_only(tmp_path):
    """corrupt -> filter -> train with and without pinyin -> predict -> score,
    averaged over three seeds on the homophone-corrupted test set."""
    cfg = dict(default_train_overrides(), epochs=6, lmax=4)
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    f1 = {"pinyin": [], "word": []}
    for seed in range(3):
        d = tmp_path / f"s{seed}"
        write_corpus([str(d), "--seed", str(seed)])
        lex = d / "lexicon.tsv"
        assert run("corrupt", "--in", d / "test.json", "--out", d / "c.json", "--lexicon", lex,
                   "--p-sub", 0.25, "--seed", 100 + seed) == 0
        assert run("filter", "--in", d / "c.json", "--out", d / "f.json") == 0
        for arm, extra in (("pinyin", []), ("word", ["--no-pinyin"])):
            ckpt = d / f"{arm}.json"
            assert run("train", "--in", d / "train.json", "--lexicon", lex, "--config",
                       tmp_path / "cfg.json", "--seed", seed, "--out", ckpt, *extra) == 0
            assert run("predict", "--in", d / "f.json", "--ckpt", ckpt, "--lexicon", lex,
                       "--out", d / f"p-{arm}.json") == 0
            assert run("score", "--dataset", d / "f.json", "--predictions",
                       d / f"p-{arm}.json", "--out", d / f"r-{arm}.json") == 0
            f1[arm].append(load(d / f"r-{arm}.json")["f1"])
    assert sum(f1["pinyin"]) / 3 > sum(f1["word"]) / 3
