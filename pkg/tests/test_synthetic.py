import json

from spokenqa.corpus import load_squad_json
from spokenqa.lexicon import build_homophone_index, parse_lexicon
from spokenqa.synthetic import main, make_corpus


def test_every_character_has_a_homophone():
    corpus = make_corpus(n_train=20, n_test=5, seed=0)
    index = build_homophone_index(corpus.lexicon)
    assert 240 <= len(corpus.chars) <= 360
    assert all(len(index.bucket_of(c)) >= 2 for c in corpus.chars)


def test_examples_are_valid_and_keys_distinct_by_sound():
    corpus = make_corpus(n_train=50, n_test=10, n_dev=10, seed=2)
    index = build_homophone_index(corpus.lexicon)
    keys = set()
    for ds in (corpus.train, corpus.test, corpus.dev):
        for ex in ds:
            ex.check()
            assert ex.document[ex.answer_start - 1] == ex.question[0]
            assert 2 <= len(ex.answer_text) <= 4
            keys.add(ex.question[0])
    sounds = [index.char_to_syllable[k] for k in keys]
    assert len(sounds) == len(set(sounds))


def test_deterministic():
    a = make_corpus(n_train=10, n_test=3, seed=5)
    b = make_corpus(n_train=10, n_test=3, seed=5)
    assert a.train.examples == b.train.examples and a.lexicon_tsv == b.lexicon_tsv


def test_main_writes_loadable_files(tmp_path):
    assert main([str(tmp_path), "--n-train", "8", "--n-test", "4"]) == 0
    lex = parse_lexicon((tmp_path / "lexicon.tsv").read_text(encoding="utf-8"))
    assert lex.entries
    train = load_squad_json((tmp_path / "train.json").read_text(encoding="utf-8"))
    assert len(train) == 8 and not train.summary["rejected"]
    assert json.loads((tmp_path / "test.json").read_text(encoding="utf-8"))["version"] == "1.1"
