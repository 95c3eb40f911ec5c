import pytest
from hypothesis import given, strategies as st

from fluent_slt.errors import DataError
from fluent_slt.text import Vocabulary, build_vocab, normalize_text


def test_normalize_basic():
    assert normalize_text("Hello, World!") == "hello world"


def test_normalize_keeps_apostrophe():
    assert normalize_text("don't STOP.") == "don't stop"


def test_normalize_keeps_accents():
    assert normalize_text("¿Qué va, mja?") == "qué va mja"


def test_normalize_folds_right_single_quote():
    assert normalize_text("don’t") == "don't"


def test_normalize_collapses_whitespace():
    assert normalize_text("  a\t b\n\nc  ") == "a b c"


@given(st.text(max_size=80))
def test_normalize_idempotent(s):
    once = normalize_text(s)
    assert normalize_text(once) == once


def test_build_vocab_counts():
    v = build_vocab(["ab", "bc"])
    assert set(v.entries) == {"a", "b", "c"}
    assert v.size == 7


def test_build_vocab_includes_space():
    v = build_vocab(["a b"])
    assert " " in v


def test_build_vocab_empty_is_error():
    with pytest.raises(DataError):
        build_vocab([])
    with pytest.raises(DataError):
        build_vocab(["", ""])


def test_vocab_sorted_and_contiguous():
    v = build_vocab(["cba"])
    assert list(v.entries.values()) == [0, 1, 2]
    assert list(v.entries.keys()) == ["a", "b", "c"]
    assert len({v.pad, v.bos, v.eos, v.unk}) == 4
    assert v.unk == v.size - 1


def test_vocab_unknown_maps_to_unk():
    v = build_vocab(["ab"])
    assert v.encode("axb") == [0, v.unk, 1]


def test_vocab_decode_skips_specials():
    v = build_vocab(["ab"])
    assert v.decode([v.bos, 0, v.pad, 1, v.eos, v.unk]) == "ab"


@given(st.text(alphabet="abc ", max_size=40))
def test_vocab_round_trip(s):
    v = build_vocab(["abc "])
    assert v.decode(v.encode(s)) == s


def test_vocab_json_round_trip():
    v = build_vocab(["qué va'"])
    v2 = Vocabulary.from_json(v.to_json())
    assert v2.chars == v.chars
    assert v2.entries == v.entries
