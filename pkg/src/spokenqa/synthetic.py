"""Synthetic homophone-rich lexicon and extraction corpus.

Every content character shares its toneless syllable with at least one
other character. Documents are comma-separated clauses, each an attribute
(key) character followed by 2-4 value characters; a question names one key
("K是什麼") and the answer is that clause's values.

Run ``python -m spokenqa.synthetic OUT_DIR`` to write ``lexicon.tsv``,
``train.json`` and ``test.json``.
"""
from __future__ import annotations

import argparse
import itertools
import json
import os
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .corpus import Dataset, find_span, to_squad_json
from .lexicon import Lexicon, build_homophone_index, parse_lexicon
from .reader import QAExample

INITIALS = ["b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "j", "q", "x",
            "zh", "ch", "sh", "r", "z", "c", "s", "y", "w"]
FINALS = ["a", "o", "e", "ai", "ei", "ao", "ou", "an", "en", "ang", "eng", "ong",
          "i", "u", "in", "ing", "ian", "iang", "uan", "un"]
QUESTION_TEMPLATES = ["{k}是什麼"]
CONTENT_BASE = 0x5000  # keeps template characters out of the content block


@dataclass
class SyntheticCorpus:
    lexicon: Lexicon
    lexicon_tsv: str
    chars: List[str]
    train: Dataset
    test: Dataset
    dev: Optional[Dataset] = None


def make_lexicon(n_syllables=120, min_homophones=2, max_homophones=3, seed=0):
    rng = np.random.default_rng(seed)
    pool = [i + f for i, f in itertools.product(INITIALS, FINALS)]
    picked = [pool[j] for j in rng.choice(len(pool), size=n_syllables, replace=False)]
    lines = []
    code = CONTENT_BASE
    chars = []
    for syl in picked:
        for _ in range(int(rng.integers(min_homophones, max_homophones + 1))):
            ch = chr(code)
            code += 1
            chars.append(ch)
            lines.append(f"{ch}\t{syl}{int(rng.integers(1, 5))}\n")
    tsv = "".join(lines)
    return parse_lexicon(tsv), tsv, chars


def make_document(keys, values, rng, n_clauses=(8, 12), value_len=(2, 4)):
    """Comma-separated ``key value...`` clauses.

    Keys are drawn without replacement from ``keys`` and values from
    ``values``. Returns the unit list and, per clause, ``(key, start, end)``
    for clauses whose value string occurs exactly once.
    """
    n = int(rng.integers(n_clauses[0], n_clauses[1] + 1))
    picked = [keys[j] for j in rng.choice(len(keys), size=n, replace=False)]
    doc: List[str] = []
    spans = []
    for ci, key in enumerate(picked):
        m = int(rng.integers(value_len[0], value_len[1] + 1))
        doc.append(key)
        start = len(doc)
        doc.extend(values[j] for j in rng.integers(len(values), size=m))
        spans.append((key, start, len(doc) - 1))
        doc.append("，" if ci < n - 1 else "。")
    unique = [(k, s, e) for k, s, e in spans
              if find_span(doc, "".join(doc[s:e + 1])) == (s, e)]
    return doc, unique


def make_examples(prefix, n, keys, values, rng, questions_per_doc=4,
                  **kw) -> List[QAExample]:
    out: List[QAExample] = []
    d = 0
    while len(out) < n:
        doc, spans = make_document(keys, values, rng, **kw)
        take = min(questions_per_doc, len(spans), n - len(out))
        for j in rng.choice(len(spans), size=take, replace=False):
            key, s, e = spans[j]
            template = QUESTION_TEMPLATES[int(rng.integers(len(QUESTION_TEMPLATES)))]
            out.append(QAExample(f"{prefix}-{d}-{len(out)}", list(template.format(k=key)),
                                 doc, s, e, "".join(doc[s:e + 1])))
        d += 1
    return out


def make_corpus(n_train=500, n_test=100, seed=0, n_dev=0, n_syllables=120, n_keys=40,
                max_homophones=3, **kw) -> SyntheticCorpus:
    """Lexicon plus train/test splits drawn from it.

    ``n_keys`` attribute characters, one per syllable, serve as clause keys
    (so a key's homophones are never keys themselves); every other
    character is a value character.
    """
    lex, tsv, chars = make_lexicon(n_syllables=n_syllables, max_homophones=max_homophones,
                                   seed=seed)
    rng = np.random.default_rng([seed, 7])
    index = build_homophone_index(lex)
    syllables = sorted(index.buckets)
    keys = [index.buckets[syllables[j]][0]
            for j in rng.choice(len(syllables), size=n_keys, replace=False)]
    key_set = set(keys)
    values = [ch for ch in chars if ch not in key_set]
    train = make_examples("train", n_train, keys, values, rng, **kw)
    test = make_examples("test", n_test, keys, values, rng, **kw)
    dev = Dataset(make_examples("dev", n_dev, keys, values, rng, **kw)) if n_dev else None
    return SyntheticCorpus(lex, tsv, chars, Dataset(train), Dataset(test), dev)


def main(argv: Optional[List[str]] = None) -> int:
    ap = argparse.ArgumentParser(description="write a synthetic homophone corpus")
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-train", type=int, default=500)
    ap.add_argument("--n-test", type=int, default=100)
    args = ap.parse_args(argv)
    corpus = make_corpus(args.n_train, args.n_test, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "lexicon.tsv"), "w", encoding="utf-8") as fh:
        fh.write(corpus.lexicon_tsv)
    for name, ds in (("train", corpus.train), ("test", corpus.test)):
        with open(os.path.join(args.out_dir, f"{name}.json"), "w", encoding="utf-8") as fh:
            json.dump(to_squad_json(ds), fh, ensure_ascii=False, sort_keys=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
