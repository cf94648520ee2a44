import string

import pytest
from hypothesis import given, strategies as st

from spokenqa.errors import LexiconParseError
from spokenqa.lexicon import (PAD, PAD_ID, UNK, UNK_ID, build_homophone_index, decompose,
                              parse_lexicon, toneless)


def letters(lex, word):
    return [lex.token_id(c) for syl in lex.entries[word] for c in syl]


def test_tone_digits_are_stripped():
    lex = parse_lexicon("上\tshang4\n")
    assert lex.entries["上"] == ("shang",)


def test_multi_syllable_entry():
    lex = parse_lexicon("長江\tchang2 jiang1\n")
    assert lex.entries["長江"] == ("chang", "jiang")


def test_empty_file_has_only_reserved_tokens():
    lex = parse_lexicon("")
    assert lex.entries == {}
    assert lex.token_vocab == (PAD, UNK)


def test_reserved_token_ids():
    lex = parse_lexicon("上\tshang4\n")
    assert lex.token_vocab[PAD_ID] == PAD
    assert lex.token_vocab[UNK_ID] == UNK
    assert set(lex.token_vocab[2:]) == set("shang")


def test_comments_and_blank_lines_skipped():
    lex = parse_lexicon("# header\n\n上\tshang4\n   \n# trailing\n")
    assert list(lex.entries) == ["上"]


def test_duplicate_headword_keeps_first():
    lex = parse_lexicon("行\txing2\n行\thang2\n")
    assert lex.entries["行"] == ("xing",)


@pytest.mark.parametrize("text,lineno", [
    ("上 shang4\n", 1),              # no TAB
    ("上\tshang4\n江\t\n", 2),        # empty syllable field
    ("上\tshāng\n", 1),               # non-ASCII syllable
    ("# c\n\n上\tsh-ang\n", 3),       # malformed syllable
    ("\tshang\n", 1),                 # empty headword
])
def test_parse_errors_name_the_line(text, lineno):
    with pytest.raises(LexiconParseError) as info:
        parse_lexicon(text)
    assert info.value.lineno == lineno
    assert f"line {lineno}" in str(info.value)


def test_keep_tones_adds_digit_tokens():
    lex = parse_lexicon("上\tshang4\n", keep_tones=True)
    assert lex.entries["上"] == ("shang4",)
    assert "4" in lex.token_vocab
    assert len(decompose("上", lex)) == 6


def test_shang_has_five_tokens(small_lex):
    seq = decompose("上", small_lex)
    assert [small_lex.token_vocab[i] for i in seq.tokens] == list("shang")
    assert len(seq) == 5


def test_unknown_character_is_single_unk(small_lex):
    assert decompose("☃", small_lex).tokens == (UNK_ID,)


def test_word_falls_back_to_characters(small_lex):
    seq = decompose("長江", small_lex)
    assert [small_lex.token_vocab[i] for i in seq.tokens] == list("changjiang")
    assert len(seq) == 10


def test_headword_match_wins_over_characters():
    lex = parse_lexicon("行\txing2\n銀行\tyin2 hang2\n銀\tyin2\n")
    assert [lex.token_vocab[i] for i in decompose("銀行", lex).tokens] == list("yinhang")


def test_mixed_known_and_unknown_characters(small_lex):
    toks = decompose("上☃", small_lex).tokens
    assert toks[:5] == tuple(small_lex.token_id(c) for c in "shang")
    assert toks[5:] == (UNK_ID,)


def test_decompose_empty_unit_raises(small_lex):
    with pytest.raises(ValueError):
        decompose("", small_lex)


def test_homophone_bucket(small_lex):
    index = build_homophone_index(small_lex)
    assert set(index.buckets["zai"]) == {"在", "再"}
    assert index.bucket_of("在") == index.bucket_of("再")
    assert index.bucket_of("☃") is None


def test_single_character_lexicon_gives_singletons():
    index = build_homophone_index(parse_lexicon("上\tshang4\n"))
    assert all(len(b) == 1 for b in index.buckets.values())


def test_empty_lexicon_gives_empty_index():
    assert len(build_homophone_index(parse_lexicon(""))) == 0


def test_multi_character_headwords_not_indexed():
    index = build_homophone_index(parse_lexicon("長江\tchang2 jiang1\n長\tchang2\n"))
    assert index.characters == ("長",)


def test_toneless():
    assert toneless("shang4") == "shang"
    assert toneless("de") == "de"


# property tests

syllable = st.text(alphabet=string.ascii_lowercase, min_size=1, max_size=6)
tone = st.sampled_from(["", "0", "1", "2", "3", "4", "5"])
headword = st.text(alphabet=st.characters(min_codepoint=0x4E00, max_codepoint=0x4FFF),
                   min_size=1, max_size=3)
entries = st.dictionaries(headword, st.lists(st.tuples(syllable, tone), min_size=1, max_size=3),
                          max_size=15)


def serialize(entries_):
    return "".join(f"{w}\t{' '.join(s + t for s, t in sylls)}\n" for w, sylls in entries_.items())


@given(entries)
def test_roundtrip_decompose_equals_syllable_letters(ents):
    lex = parse_lexicon(serialize(ents))
    for w, sylls in ents.items():
        expected = [lex.token_id(c) for s, _ in sylls for c in s]
        assert list(decompose(w, lex).tokens) == expected
        assert list(decompose(w, lex).tokens) == letters(lex, w)


@given(entries)
def test_serialize_parse_roundtrip(ents):
    lex = parse_lexicon(serialize(ents))
    again = parse_lexicon(lex.to_tsv())
    assert again.entries == lex.entries
    assert again.token_vocab == lex.token_vocab


@given(entries)
def test_vocab_covers_every_letter(ents):
    lex = parse_lexicon(serialize(ents))
    assert lex.token_vocab[:2] == (PAD, UNK)
    used = {c for sylls in lex.entries.values() for s in sylls for c in s}
    assert used <= set(lex.token_vocab)
    for sylls in lex.entries.values():
        assert all(s.isascii() and s.isalpha() and s.islower() for s in sylls)


@given(entries)
def test_bucket_members_decompose_to_bucket_key(ents):
    lex = parse_lexicon(serialize(ents))
    index = build_homophone_index(lex)
    for key, chars in index.buckets.items():
        assert chars
        for c in chars:
            assert list(decompose(c, lex).tokens) == [lex.token_id(x) for x in key]


@given(entries, headword)
def test_decompose_deterministic(ents, w):
    lex = parse_lexicon(serialize(ents))
    assert decompose(w, lex) == decompose(w, lex)
    assert len(decompose(w, lex)) >= 1
