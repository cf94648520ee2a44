"""Character-level Exact Match / F1 and word error rate."""
from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

from rapidfuzz.distance import Levenshtein

from .errors import ContractError, DataError


def normalize_answer(text: str) -> str:
    """Drop whitespace and Unicode punctuation; lowercase ASCII only."""
    out = []
    for ch in text:
        if ch.isspace() or unicodedata.category(ch).startswith("P"):
            continue
        out.append(ch.lower() if ch.isascii() else ch)
    return "".join(out)


def _check_golds(golds):
    if isinstance(golds, str):
        raise ContractError("golds must be a list of strings, not a string")
    if len(golds) == 0:
        raise ContractError("golds must be non-empty")


def exact_match(pred: str, golds: Sequence[str]) -> int:
    _check_golds(golds)
    p = normalize_answer(pred)
    return int(any(p == normalize_answer(g) for g in golds))


def _f1_single(pred: str, gold: str) -> float:
    if not pred or not gold:
        return float(pred == gold)
    common = Counter(pred) & Counter(gold)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(gold)
    return 2 * precision * recall / (precision + recall)


def char_f1(pred: str, golds: Sequence[str]) -> float:
    """Max over golds of the character-multiset F1."""
    _check_golds(golds)
    p = normalize_answer(pred)
    return max(_f1_single(p, normalize_answer(g)) for g in golds)


@dataclass
class EvalReport:
    em: float
    f1: float
    n: int
    per_example: List[Tuple[str, int, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "em": self.em,
            "f1": self.f1,
            "n": self.n,
            "per_example": [
                {"id": i, "em": e, "f1": f} for i, e, f in self.per_example
            ],
        }


def evaluate(predictions: Mapping[str, str], dataset) -> EvalReport:
    """Score predictions against every example of ``dataset``.

    ``dataset`` is a ``corpus.Dataset`` or any iterable of examples with
    ``id`` and ``answer_text``.
    """
    examples = list(getattr(dataset, "examples", dataset))
    if not examples:
        raise ContractError("cannot evaluate an empty dataset")
    missing = [ex.id for ex in examples if ex.id not in predictions]
    if missing:
        raise DataError(f"missing predictions for ids: {', '.join(missing)}")
    rows = []
    for ex in examples:
        pred = predictions[ex.id]
        golds = [ex.answer_text]
        rows.append((ex.id, exact_match(pred, golds), char_f1(pred, golds)))
    n = len(rows)
    em = sum(r[1] for r in rows) / n
    f1 = sum(r[2] for r in rows) / n
    return EvalReport(em=em, f1=f1, n=n, per_example=rows)


def edit_distance(reference: Sequence, hypothesis: Sequence) -> int:
    return Levenshtein.distance(list(reference), list(hypothesis))


def wer(reference: Sequence, hypothesis: Sequence) -> float:
    """(S + D + I) / len(reference) under minimal edit distance."""
    if len(reference) == 0:
        raise ContractError("reference must be non-empty")
    return edit_distance(reference, hypothesis) / len(reference)


def corpus_wer(pairs: Sequence[Tuple[Sequence, Sequence]]) -> float:
    """Total edits over total reference length."""
    edits = total = 0
    for ref, hyp in pairs:
        edits += edit_distance(ref, hyp)
        total += len(ref)
    if total == 0:
        raise ContractError("reference must be non-empty")
    return edits / total


def report_from_dict(d: Dict) -> EvalReport:
    rows = [(r["id"], r["em"], r["f1"]) for r in d["per_example"]]
    return EvalReport(em=d["em"], f1=d["f1"], n=d["n"], per_example=rows)
