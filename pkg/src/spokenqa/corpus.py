"""Corpus ingestion, synthetic ASR noise, answer filtering and augmentation.

Corpora are read and written as SQuAD-v1 style JSON. Documents and
questions are segmented into lexical units: single characters by default,
whitespace tokens in ``word`` mode.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import urllib.request
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ContractError, DataError
from .lexicon import HomophoneIndex, Lexicon
from .metrics import wer
from .reader import QAExample

logger = logging.getLogger(__name__)

PROVENANCES = ("original", "corrupted", "backtranslated", "merged")
JOINERS = {"char": "", "word": " "}


@dataclass
class Dataset:
    examples: List[QAExample]
    provenance: str = "original"
    unit_mode: str = "char"
    summary: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ContractError(f"unknown provenance {self.provenance!r}")
        if self.unit_mode not in JOINERS:
            raise ContractError(f"unknown unit mode {self.unit_mode!r}")
        seen = set()
        for ex in self.examples:
            if ex.id in seen:
                raise DataError(f"duplicate example id {ex.id!r}")
            seen.add(ex.id)

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def by_id(self) -> Dict[str, QAExample]:
        return {ex.id: ex for ex in self.examples}


def segment(text: str, mode: str = "char") -> Tuple[List[str], List[int]]:
    """Split text into units and return them with their character offsets."""
    if mode == "char":
        return list(text), list(range(len(text)))
    if mode == "word":
        units, offsets = [], []
        i = 0
        for tok in text.split():
            i = text.index(tok, i)
            units.append(tok)
            offsets.append(i)
            i += len(tok)
        return units, offsets
    raise ContractError(f"unknown unit mode {mode!r}")


def _require(obj, key, path, kind):
    if not isinstance(obj, dict) or key not in obj:
        raise DataError(f"{path}: missing field {key!r}")
    val = obj[key]
    if not isinstance(val, kind):
        raise DataError(f"{path}.{key}: expected {kind.__name__}")
    return val


def load_squad_json(content, mode: Optional[str] = None) -> Dataset:
    """Parse SQuAD-v1 style JSON (string or already-decoded object).

    Examples whose ``answer_start`` does not point at ``text`` are rejected;
    their ids are listed in ``summary["rejected"]``. ``answer_start == -1``
    marks an answer that still has to be located by ``filter_answerable``.
    """
    if isinstance(content, (str, bytes)):
        try:
            obj = json.loads(content)
        except json.JSONDecodeError as exc:
            raise DataError(f"$: invalid JSON ({exc})") from exc
    else:
        obj = content
    if not isinstance(obj, dict):
        raise DataError("$: expected an object")
    mode = mode or obj.get("unit_mode", "char")
    provenance = obj.get("provenance_tag", "original")
    joiner = JOINERS.get(mode)
    if joiner is None:
        raise DataError(f"$.unit_mode: unknown mode {mode!r}")
    examples: List[QAExample] = []
    rejected: List[str] = []
    for ai, article in enumerate(_require(obj, "data", "$", list)):
        apath = f"$.data[{ai}]"
        for pi, para in enumerate(_require(article, "paragraphs", apath, list)):
            ppath = f"{apath}.paragraphs[{pi}]"
            context = _require(para, "context", ppath, str)
            units, offsets = segment(context, mode)
            start_of = {off: i for i, off in enumerate(offsets)}
            end_of = {off + len(u): i for i, (u, off) in enumerate(zip(units, offsets))}
            for qi, qa in enumerate(_require(para, "qas", ppath, list)):
                qpath = f"{ppath}.qas[{qi}]"
                qid = _require(qa, "id", qpath, str)
                question = _require(qa, "question", qpath, str)
                answers = _require(qa, "answers", qpath, list)
                if not answers:
                    raise DataError(f"{qpath}.answers: empty")
                text = _require(answers[0], "text", f"{qpath}.answers[0]", str)
                start = _require(answers[0], "answer_start", f"{qpath}.answers[0]", int)
                qunits, _ = segment(question, mode)
                if start == -1:
                    examples.append(QAExample(qid, qunits, units, None, None, text, joiner))
                    continue
                s = start_of.get(start)
                e = end_of.get(start + len(text))
                ok = (s is not None and e is not None and s <= e
                      and context[start:start + len(text)] == text
                      and joiner.join(units[s:e + 1]) == text)
                if not ok:
                    rejected.append(qid)
                    continue
                examples.append(QAExample(qid, qunits, units, s, e, text, joiner))
    if rejected:
        logger.warning("rejected %d inconsistent examples: %s", len(rejected), rejected)
    return Dataset(examples, provenance, mode, {"rejected": rejected})


def _char_offset(ex: QAExample) -> int:
    if not ex.located:
        return -1
    return sum(len(u) for u in ex.document[:ex.answer_start]) + len(ex.joiner) * ex.answer_start


def to_squad_json(ds: Dataset, extra: Optional[dict] = None) -> dict:
    """Inverse of ``load_squad_json``; consecutive examples sharing a context
    are grouped into one paragraph."""
    paragraphs: List[dict] = []
    for ex in ds.examples:
        context = ex.joiner.join(ex.document)
        qa = {"id": ex.id, "question": ex.joiner.join(ex.question),
              "answers": [{"text": ex.answer_text, "answer_start": _char_offset(ex)}]}
        if paragraphs and paragraphs[-1]["context"] == context:
            paragraphs[-1]["qas"].append(qa)
        else:
            paragraphs.append({"context": context, "qas": [qa]})
    out = {"version": "1.1", "unit_mode": ds.unit_mode, "provenance_tag": ds.provenance,
           "data": [{"title": ds.provenance, "paragraphs": paragraphs}]}
    if extra:
        out.update(extra)
    return out


# ASR noise channel

@dataclass(frozen=True)
class ChannelConfig:
    p_sub: float = 0.0
    p_del: float = 0.0
    p_ins: float = 0.0
    seed: int = 0
    mode: str = "homophone"

    def __post_init__(self):
        for name in ("p_sub", "p_del", "p_ins"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name}={p} outside [0, 1]")
        if self.p_sub + self.p_del + self.p_ins > 1.0 + 1e-12:
            raise ConfigError("p_sub + p_del + p_ins must not exceed 1")
        if self.mode not in ("homophone", "uniform"):
            raise ConfigError(f"unknown channel mode {self.mode!r}")


def _stream(seed: int, key: str) -> np.random.Generator:
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])


def corrupt_units(units: Sequence[str], cfg: ChannelConfig, index: HomophoneIndex,
                  rng: np.random.Generator) -> List[str]:
    """Apply the channel to one unit sequence.

    One uniform draw per unit decides substitute / delete / insert-after /
    keep, in that priority order.
    """
    chars = index.characters
    out: List[str] = []
    for u in units:
        r = rng.random()
        if r < cfg.p_sub:
            if cfg.mode == "homophone":
                bucket = index.bucket_of(u)
                if bucket is None or len(bucket) < 2:
                    out.append(u)
                else:
                    others = [c for c in bucket if c != u]
                    out.append(others[rng.integers(len(others))])
            else:
                others = [c for c in chars if c != u]
                out.append(others[rng.integers(len(others))] if others else u)
        elif r < cfg.p_sub + cfg.p_del:
            continue
        elif r < cfg.p_sub + cfg.p_del + cfg.p_ins:
            out.append(u)
            if chars:
                out.append(chars[rng.integers(len(chars))])
        else:
            out.append(u)
    return out


def corrupt(ds: Dataset, cfg: ChannelConfig, index: HomophoneIndex,
            lex: Optional[Lexicon] = None) -> Dataset:
    """Pass every document through the noise channel; questions stay intact.

    The random stream is keyed on the seed and the document text, so QA
    pairs sharing a context see the same corrupted document. Answer spans
    are left unlocated for ``filter_answerable``.
    """
    if cfg.mode == "homophone" and len(index) == 0:
        raise ConfigError("homophone channel needs a non-empty homophone index")
    if cfg.mode == "uniform" and not index.characters:
        raise ConfigError("uniform channel needs indexed characters")
    memo: Dict[Tuple[str, ...], List[str]] = {}
    out = []
    for ex in ds.examples:
        doc = memo.get(ex.document)
        if doc is None:
            key = "\x1f".join(ex.document)
            doc = memo[ex.document] = corrupt_units(ex.document, cfg, index, _stream(cfg.seed, key))
        out.append(replace(ex, document=tuple(doc), answer_start=None, answer_end=None))
    return Dataset(out, "corrupted", ds.unit_mode,
                   {"channel": {"p_sub": cfg.p_sub, "p_del": cfg.p_del, "p_ins": cfg.p_ins,
                                "seed": cfg.seed, "mode": cfg.mode}})


def find_span(document: Sequence[str], answer: str, joiner: str = "") -> Optional[Tuple[int, int]]:
    """First (start, end) unit span whose joined text equals ``answer``."""
    if not answer:
        return None
    n = len(document)
    for s in range(n):
        if not answer.startswith(document[s]):
            continue
        text = document[s]
        if text == answer:
            return s, s
        for e in range(s + 1, n):
            text = text + joiner + document[e]
            if not answer.startswith(text):
                break
            if text == answer:
                return s, e
    return None


def filter_answerable(ds: Dataset) -> Dataset:
    """Keep examples whose answer occurs in the document, relocated to the
    first occurrence."""
    kept = []
    for ex in ds.examples:
        span = find_span(ex.document, ex.answer_text, ex.joiner)
        if span is not None:
            kept.append(replace(ex, answer_start=span[0], answer_end=span[1]))
    dropped = len(ds) - len(kept)
    summary = dict(ds.summary)
    summary.update({"kept": len(kept), "dropped": dropped})
    return Dataset(kept, ds.provenance, ds.unit_mode, summary)


# back-translation

class TranslatorClient(Protocol):
    def translate(self, text: str, source: str, target: str) -> str: ...


class IdentityTranslator:
    def translate(self, text, source, target):
        return text


class MockParaphraser:
    """Deterministic stand-in for a machine translation round trip.

    Translating into the pivot language is the identity; translating back
    applies longest-match synonym substitution and then drops each unit
    with probability ``dropout``. The random stream depends only on the
    seed and the input text.
    """

    def __init__(self, synonyms: Optional[Dict[str, object]] = None, seed: int = 0,
                 dropout: float = 0.0, source_lang: str = "zh", unit_mode: str = "char"):
        if not 0.0 <= dropout <= 1.0:
            raise ConfigError("dropout must lie in [0, 1]")
        self.synonyms = {}
        for k, v in (synonyms or {}).items():
            self.synonyms[k] = [v] if isinstance(v, str) else list(v)
        self.seed = seed
        self.dropout = dropout
        self.source_lang = source_lang
        self.unit_mode = unit_mode
        self._maxlen = max((len(k) for k in self.synonyms), default=0)

    def _substitute(self, text, rng):
        out = []
        i = 0
        while i < len(text):
            for size in range(min(self._maxlen, len(text) - i), 0, -1):
                alts = self.synonyms.get(text[i:i + size])
                if alts:
                    out.append(alts[rng.integers(len(alts))])
                    i += size
                    break
            else:
                out.append(text[i])
                i += 1
        return "".join(out)

    def translate(self, text, source, target):
        if target != self.source_lang:
            return text
        rng = _stream(self.seed, text)
        text = self._substitute(text, rng)
        if self.dropout > 0:
            units, _ = segment(text, self.unit_mode)
            units = [u for u in units if rng.random() >= self.dropout]
            text = JOINERS[self.unit_mode].join(units)
        return text


class HttpTranslator:
    """Thin JSON-over-HTTP client. POSTs ``{"q", "source", "target"}`` and
    reads ``translatedText`` from the response."""

    ENDPOINT_VAR = "SPOKENQA_TRANSLATE_URL"
    KEY_VAR = "SPOKENQA_TRANSLATE_KEY"

    def __init__(self, endpoint: Optional[str] = None, key: Optional[str] = None,
                 timeout: float = 30.0):
        self.endpoint = endpoint or os.environ.get(self.ENDPOINT_VAR)
        self.key = key or os.environ.get(self.KEY_VAR)
        if not self.endpoint:
            raise ConfigError(f"set {self.ENDPOINT_VAR} to use the http translator")
        self.timeout = timeout

    def translate(self, text, source, target):
        body = json.dumps({"q": text, "source": source, "target": target}).encode("utf-8")
        req = urllib.request.Request(self.endpoint, data=body,
                                     headers={"Content-Type": "application/json"})
        if self.key:
            req.add_header("Authorization", f"Bearer {self.key}")
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))["translatedText"]


def backtranslate(ds: Dataset, client: TranslatorClient, pivot: str = "en",
                  source: str = "zh") -> Dataset:
    """Round-trip every document through ``pivot`` and keep answerable ones.

    Client failures drop the affected examples; their ids are collected in
    ``summary["failures"]``.
    """
    memo: Dict[Tuple[str, ...], Optional[List[str]]] = {}
    failures: List[str] = []
    out = []
    for ex in ds.examples:
        if ex.document not in memo:
            try:
                text = ex.joiner.join(ex.document)
                back = client.translate(client.translate(text, source, pivot), pivot, source)
                memo[ex.document] = segment(back, ds.unit_mode)[0]
            except Exception as exc:  # noqa: BLE001 - any client error drops the example
                logger.warning("translation failed for %s: %s", ex.id, exc)
                memo[ex.document] = None
        doc = memo[ex.document]
        if doc is None:
            failures.append(ex.id)
            continue
        out.append(replace(ex, document=tuple(doc), answer_start=None, answer_end=None))
    result = filter_answerable(Dataset(out, "backtranslated", ds.unit_mode))
    result.summary.update({"failures": failures, "failure_count": len(failures),
                           "dropped": result.summary["dropped"] + len(failures)})
    return result


def merge(datasets: Sequence[Dataset]) -> Dataset:
    """Concatenate datasets, prefixing ids with each source's provenance tag."""
    if not datasets:
        raise ContractError("nothing to merge")
    modes = {d.unit_mode for d in datasets}
    if len(modes) > 1:
        raise DataError(f"cannot merge datasets with unit modes {sorted(modes)}")
    out: List[QAExample] = []
    seen = set()
    for d in datasets:
        for ex in d.examples:
            new_id = f"{d.provenance}/{ex.id}"
            if new_id in seen:
                raise DataError(f"id collision after prefixing: {new_id!r}")
            seen.add(new_id)
            out.append(replace(ex, id=new_id))
    return Dataset(out, "merged", modes.pop(), {"sources": [len(d) for d in datasets]})


@dataclass
class CorpusStats:
    qa_pairs: int
    avg_doc_len: float
    avg_q_len: float
    wer: Optional[float] = None

    def to_dict(self) -> dict:
        return {"qa_pairs": self.qa_pairs, "avg_doc_len": self.avg_doc_len,
                "avg_q_len": self.avg_q_len, "wer": self.wer}


def _n_chars(units: Sequence[str]) -> int:
    return sum(len(u) for u in units)


def stats(ds: Dataset, reference: Optional[Dataset] = None) -> CorpusStats:
    n = len(ds)
    avg_d = sum(_n_chars(ex.document) for ex in ds) / n if n else 0.0
    avg_q = sum(_n_chars(ex.question) for ex in ds) / n if n else 0.0
    rate = None
    if reference is not None:
        ref = reference.by_id()
        missing = [ex.id for ex in ds if ex.id not in ref]
        if missing:
            raise DataError(f"ids absent from reference: {', '.join(missing[:10])}")
        if n:
            rate = sum(wer(ref[ex.id].document, ex.document) for ex in ds) / n
    return CorpusStats(n, avg_d, avg_q, rate)
