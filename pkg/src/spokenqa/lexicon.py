"""Pinyin pronunciation lexicon and letter-level decomposition.

Lexicon files are UTF-8 TSV, one entry per line::

    # comment
    上	shang4
    長江	chang2 jiang1

Tone digits (0-5) are stripped unless ``keep_tones`` is set, in which case
each digit becomes an extra pinyin-token after its syllable.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from .errors import LexiconParseError

PAD = "<pad>"
UNK = "<unk>"
PAD_ID = 0
UNK_ID = 1

_SYLLABLE_RE = re.compile(r"^([a-z]+)([0-5]?)$")


@dataclass(frozen=True)
class PinyinSequence:
    tokens: Tuple[int, ...]

    def __post_init__(self):
        if len(self.tokens) < 1:
            raise ValueError("pinyin sequence must hold at least one token")

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class Lexicon:
    entries: Dict[str, Tuple[str, ...]]
    token_vocab: Tuple[str, ...] = (PAD, UNK)
    keep_tones: bool = False
    _token_index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_token_index", {t: i for i, t in enumerate(self.token_vocab)}
        )

    @property
    def num_tokens(self) -> int:
        return len(self.token_vocab)

    def token_id(self, token: str) -> int:
        return self._token_index.get(token, UNK_ID)

    def syllables(self, headword: str):
        return self.entries.get(headword)

    def to_tsv(self) -> str:
        return "".join(f"{w}\t{' '.join(s)}\n" for w, s in self.entries.items())


def _syllable_tokens(syllable: str) -> List[str]:
    # a syllable is letters plus an optional trailing tone digit
    return list(syllable)


def parse_lexicon(text: str, keep_tones: bool = False) -> Lexicon:
    """Parse TSV lexicon content.

    Duplicate headwords keep the first pronunciation listed. Raises
    ``LexiconParseError`` naming the offending 1-based line number.
    """
    entries: Dict[str, Tuple[str, ...]] = {}
    letters = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "\t" not in line:
            raise LexiconParseError(lineno, "expected headword<TAB>syllables")
        head, _, rest = line.partition("\t")
        head = head.strip()
        if not head:
            raise LexiconParseError(lineno, "empty headword")
        parts = rest.split()
        if not parts:
            raise LexiconParseError(lineno, "empty syllable field")
        sylls = []
        for part in parts:
            if not part.isascii():
                raise LexiconParseError(lineno, f"non-ASCII syllable {part!r}")
            m = _SYLLABLE_RE.match(part.lower())
            if m is None:
                raise LexiconParseError(lineno, f"malformed syllable {part!r}")
            syl = m.group(1) + (m.group(2) if keep_tones else "")
            sylls.append(syl)
            letters.update(syl)
        if head not in entries:
            entries[head] = tuple(sylls)
    vocab = (PAD, UNK) + tuple(sorted(letters))
    return Lexicon(entries=entries, token_vocab=vocab, keep_tones=keep_tones)


def syllable_tokens(syllables: Sequence[str], lex: Lexicon) -> List[int]:
    return [lex.token_id(ch) for syl in syllables for ch in _syllable_tokens(syl)]


def decompose(unit: str, lex: Lexicon) -> PinyinSequence:
    """Map a lexical unit to its pinyin-token id sequence.

    An exact headword match wins; otherwise each character is looked up on
    its own and unknown characters contribute a single UNK token.
    """
    if not unit:
        raise ValueError("cannot decompose an empty unit")
    sylls = lex.entries.get(unit)
    if sylls is not None:
        return PinyinSequence(tuple(syllable_tokens(sylls, lex)))
    ids: List[int] = []
    for ch in unit:
        s = lex.entries.get(ch)
        if s is None:
            ids.append(UNK_ID)
        else:
            ids.extend(syllable_tokens(s, lex))
    return PinyinSequence(tuple(ids))


def toneless(syllable: str) -> str:
    return syllable.rstrip("012345")


@dataclass(frozen=True)
class HomophoneIndex:
    """Toneless syllable -> characters sharing it, in lexicon order."""

    buckets: Dict[str, Tuple[str, ...]]
    char_to_syllable: Dict[str, str]

    def __len__(self):
        return len(self.buckets)

    def bucket_of(self, char: str):
        syl = self.char_to_syllable.get(char)
        return None if syl is None else self.buckets[syl]

    @property
    def characters(self) -> Tuple[str, ...]:
        return tuple(self.char_to_syllable)


def build_homophone_index(lex: Lexicon) -> HomophoneIndex:
    buckets: Dict[str, List[str]] = {}
    char_to_syl: Dict[str, str] = {}
    for head, sylls in lex.entries.items():
        if len(head) != 1 or len(sylls) != 1:
            continue
        key = toneless(sylls[0])
        buckets.setdefault(key, []).append(head)
        char_to_syl[head] = key
    return HomophoneIndex(
        buckets={k: tuple(v) for k, v in buckets.items()},
        char_to_syllable=char_to_syl,
    )
