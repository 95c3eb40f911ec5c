import numpy as np
import pytest

from fluent_slt.corpus import (
    CONTENT_ALPHABET,
    DataConfig,
    Utterance,
    filter_long,
    make_synthetic_corpus,
    read_manifest,
    validate_train_utterances,
    write_manifest,
)
from fluent_slt.errors import DataError
from fluent_slt.frontend import FeatureMatrix
from fluent_slt.text import build_vocab


def test_zero_rate_source_equals_fluent():
    utts = make_synthetic_corpus(DataConfig(disfluency_rate=0.0, seed=3), 50)
    for u in utts:
        assert u.source_text == u.fluent_refs[0]
        assert u.disfluent_refs == [u.source_text]


def test_fixed_seed_reproducible():
    cfg = DataConfig(disfluency_rate=0.3, seed=9)
    a = make_synthetic_corpus(cfg, 100)
    b = make_synthetic_corpus(cfg, 100)
    assert [(u.source_text, u.fluent_refs) for u in a] == [
        (u.source_text, u.fluent_refs) for u in b
    ]


def test_different_seed_differs():
    a = make_synthetic_corpus(DataConfig(seed=1), 50)
    b = make_synthetic_corpus(DataConfig(seed=2), 50)
    assert [u.source_text for u in a] != [u.source_text for u in b]


def test_inserted_token_fraction_matches_rate():
    cfg = DataConfig(disfluency_rate=0.2, seed=5)
    utts = make_synthetic_corpus(cfg, 10000)
    inserted = 0
    total = 0
    for u in utts:
        total += len(u.source_text.split())
        inserted += len(u.source_text.split()) - len(u.fluent_refs[0].split())
    assert inserted / total == pytest.approx(0.2, abs=0.02)


def _is_subsequence(needle, haystack):
    it = iter(haystack)
    return all(any(x == y for y in it) for x in needle)


def test_fluent_is_word_subsequence_of_source():
    utts = make_synthetic_corpus(DataConfig(disfluency_rate=0.4, seed=7), 300)
    for u in utts:
        assert _is_subsequence(u.fluent_refs[0].split(), u.source_text.split())


def test_insertions_are_fillers_repeats_or_foreign_fragments():
    cfg = DataConfig(disfluency_rate=0.5, seed=13)
    utts = make_synthetic_corpus(cfg, 300)
    for u in utts:
        fluent = u.fluent_refs[0].split()
        fluent_set = set(fluent)
        pos = 0
        for token in u.source_text.split():
            if pos < len(fluent) and token == fluent[pos]:
                pos += 1
                continue
            # an inserted token: filler, immediate repetition of an adjacent
            # word, or a false-start fragment that is no fluent word at all
            if token in cfg.filler_symbols:
                continue
            if token in fluent_set:
                repeat_prev = pos > 0 and token == fluent[pos - 1]
                repeat_next = pos < len(fluent) and token == fluent[pos]
                assert repeat_prev or repeat_next
            else:
                assert pos < len(fluent) and fluent[pos].startswith(token)
        assert pos == len(fluent)


def test_fillers_absent_from_fluent_vocab():
    cfg = DataConfig(disfluency_rate=0.4, seed=21)
    utts = make_synthetic_corpus(cfg, 500)
    fluent_vocab = build_vocab([u.fluent_refs[0] for u in utts])
    for symbol in cfg.filler_symbols:
        assert symbol not in fluent_vocab
    source_vocab = build_vocab([u.source_text for u in utts])
    assert any(s in source_vocab for s in cfg.filler_symbols)


def test_content_alphabet_only():
    utts = make_synthetic_corpus(DataConfig(seed=2), 100)
    allowed = set(CONTENT_ALPHABET) | {" "}
    for u in utts:
        assert set(u.fluent_refs[0]) <= allowed


def test_filler_symbols_must_be_disjoint():
    with pytest.raises(ValueError):
        DataConfig(filler_symbols=frozenset({"a"}))


def test_rate_validation():
    with pytest.raises(ValueError):
        DataConfig(disfluency_rate=-0.1)
    with pytest.raises(ValueError):
        DataConfig(disfluency_rate=1.0)


def _with_frames(n):
    return Utterance(
        id=f"u{n}",
        speaker_id="s0",
        features=FeatureMatrix(np.zeros((n, 4), dtype=np.float32)),
        source_text="a",
        disfluent_refs=["a"],
        fluent_refs=["a"],
    )


def test_filter_long_boundary():
    cfg = DataConfig(max_frames=1500)
    kept = filter_long([_with_frames(1500)], cfg)
    assert len(kept) == 1
    assert filter_long([_with_frames(1501)], cfg) == []


def test_filter_long_mixed_order_preserved():
    cfg = DataConfig(max_frames=1500)
    utts = [_with_frames(100), _with_frames(2000), _with_frames(1500)]
    kept = filter_long(utts, cfg)
    assert [u.features.num_frames for u in kept] == [100, 1500]


def test_filter_long_requires_features():
    cfg = DataConfig()
    u = _with_frames(5)
    u.features = None
    with pytest.raises(ValueError):
        filter_long([u], cfg)


def test_manifest_round_trip(tmp_path):
    utts = make_synthetic_corpus(DataConfig(seed=4), 20)
    path = tmp_path / "corpus.tsv"
    write_manifest(path, utts)
    loaded = read_manifest(path)
    assert [u.id for u in loaded] == [u.id for u in utts]
    assert [u.source_text for u in loaded] == [u.source_text for u in utts]
    assert [u.disfluent_refs for u in loaded] == [u.disfluent_refs for u in utts]
    assert [u.fluent_refs for u in loaded] == [u.fluent_refs for u in utts]


def test_manifest_multi_reference_field(tmp_path):
    u = Utterance("u0", "s0", None, "a b", ["a b", "the a b"], ["a"])
    path = tmp_path / "m.tsv"
    write_manifest(path, [u])
    loaded = read_manifest(path)[0]
    assert loaded.disfluent_refs == ["a b", "the a b"]
    assert "|||" in path.read_text()


def test_manifest_duplicate_id_rejected(tmp_path):
    u = Utterance("dup", "s0", None, "a", ["a"], ["a"])
    v = Utterance("dup", "s1", None, "b", ["b"], ["b"])
    path = tmp_path / "m.tsv"
    write_manifest(path, [u, v])
    with pytest.raises(DataError):
        read_manifest(path)


def test_manifest_missing_file():
    with pytest.raises(DataError):
        read_manifest("/no/such/manifest.tsv")


def test_validate_train_utterances():
    good = Utterance("a", "s", None, "x", ["x"], [])
    bad = Utterance("b", "s", None, "x", [""], [" "])
    validate_train_utterances([good])
    with pytest.raises(DataError):
        validate_train_utterances([good, bad])


def test_size_must_be_positive():
    with pytest.raises(ValueError):
        make_synthetic_corpus(DataConfig(), 0)
