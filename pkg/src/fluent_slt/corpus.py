"""Utterance corpora: synthetic disfluent/fluent generation, manifests, filtering.

The synthetic generator stands in for a large conversational corpus. Each
utterance has a fluent word sequence over the content alphabet a-j and a
disfluent rendering of it with planted fillers, immediate repetitions and
false starts. Filler symbols live outside the content alphabet so a model
trained on fluent targets structurally cannot emit them.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .frontend import FeatureMatrix

CONTENT_ALPHABET = "abcdefghij"
REF_SEPARATOR = "|||"
NO_FEATURES = "-"


@dataclass
class DataConfig:
    max_frames: int = 1500
    disfluency_rate: float = 0.2
    filler_symbols: frozenset = frozenset({"u", "x", "z"})
    seed: int = 0
    # shape of the fluent sentences: words per utterance, characters per word
    words: tuple = (2, 5)
    word_chars: tuple = (1, 4)

    def __post_init__(self):
        if self.max_frames <= 0:
            raise ValueError("max_frames must be positive")
        if not 0.0 <= self.disfluency_rate < 1.0:
            raise ValueError("disfluency_rate must lie in [0, 1)")
        bad = set(self.filler_symbols) & set(CONTENT_ALPHABET)
        if bad:
            raise ValueError(f"filler symbols overlap the content alphabet: {sorted(bad)}")


@dataclass
class Utterance:
    id: str
    speaker_id: str
    features: FeatureMatrix | None
    source_text: str
    disfluent_refs: list[str]
    fluent_refs: list[str]
    feature_path: str | None = None


def make_synthetic_corpus(config: DataConfig, size: int) -> list[Utterance]:
    """Generate `size` utterances, deterministic in config.seed.

    Every fluent word sequence is disfluenced by inserting, per word, a
    geometric number of extra tokens with success probability
    `disfluency_rate`; the expected inserted-token fraction of the disfluent
    text therefore equals the rate. Insertions are fillers, immediate
    repetitions, or false-start fragments (a proper prefix of the following
    word, chosen to differ from every fluent word of the utterance).
    """
    if size <= 0:
        raise ValueError("size must be positive")
    rng = np.random.default_rng(config.seed)
    fillers = sorted(config.filler_symbols)
    lo_w, hi_w = config.words
    lo_c, hi_c = config.word_chars
    utts = []
    for i in range(size):
        n_words = int(rng.integers(lo_w, hi_w + 1))
        words = []
        for _ in range(n_words):
            n_chars = int(rng.integers(lo_c, hi_c + 1))
            idx = rng.integers(0, len(CONTENT_ALPHABET), size=n_chars)
            words.append("".join(CONTENT_ALPHABET[j] for j in idx))
        word_set = set(words)
        src = []
        for w in words:
            repeats = 0
            for _ in range(_n_insertions(rng, config.disfluency_rate)):
                kind = int(rng.integers(0, 3))
                if kind == 1:
                    repeats += 1
                    continue
                frag = _false_start(rng, w, word_set) if kind == 2 else None
                if frag is None:
                    frag = fillers[int(rng.integers(0, len(fillers)))] if fillers else w
                    if frag == w:
                        repeats += 1
                        continue
                src.append(frag)
            src.extend([w] * repeats)
            src.append(w)
        source = " ".join(src)
        fluent = " ".join(words)
        utts.append(
            Utterance(
                id=f"utt{i:05d}",
                speaker_id=f"s{i % 8}",
                features=None,
                source_text=source,
                disfluent_refs=[source],
                fluent_refs=[fluent],
            )
        )
    return utts


def _n_insertions(rng, rate: float) -> int:
    n = 0
    while rate > 0.0 and rng.random() < rate:
        n += 1
    return n


def _false_start(rng, word: str, word_set: set) -> str | None:
    """A proper prefix of `word` that is not itself a fluent word, or None."""
    if len(word) < 2:
        return None
    cut = int(rng.integers(1, len(word)))
    for k in range(cut, 0, -1):
        if word[:k] not in word_set:
            return word[:k]
    for k in range(cut + 1, len(word)):
        if word[:k] not in word_set:
            return word[:k]
    return None


def filter_long(utterances: list[Utterance], config: DataConfig) -> list[Utterance]:
    """Keep utterances with at most max_frames feature frames, order preserved."""
    kept = []
    for u in utterances:
        if u.features is None:
            raise ValueError(f"utterance {u.id} has no features")
        if u.features.num_frames <= config.max_frames:
            kept.append(u)
    return kept


def write_manifest(path, utterances: list[Utterance]) -> None:
    """Write a UTF-8 TSV manifest, one utterance per line.

    Columns: id, speaker, feature path (or "-"), source text, disfluent
    references, fluent references. Multiple references within a field are
    joined by "|||". Feature paths are taken from `u.feature_path` when a
    caller has set one; otherwise "-".
    """
    path = Path(path)
    lines = []
    for u in utterances:
        feat = u.feature_path or NO_FEATURES
        fields = [
            u.id,
            u.speaker_id,
            str(feat),
            u.source_text,
            REF_SEPARATOR.join(u.disfluent_refs),
            REF_SEPARATOR.join(u.fluent_refs),
        ]
        for f in fields:
            if "\t" in f or "\n" in f:
                raise DataError(f"manifest field for {u.id} contains a tab or newline")
        lines.append("\t".join(fields))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path, load_features: bool = False) -> list[Utterance]:
    """Read a manifest written by write_manifest.

    Feature paths resolve relative to the manifest location. With
    load_features=True the referenced feature files are read eagerly.
    """
    from .frontend import read_features

    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    utts = []
    seen_ids = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 6:
            raise DataError(f"{path}:{lineno}: expected 6 tab-separated fields, got {len(cols)}")
        uid, speaker, feat, source, disf, flu = cols
        if uid in seen_ids:
            raise DataError(f"{path}:{lineno}: duplicate utterance id {uid}")
        seen_ids.add(uid)
        u = Utterance(
            id=uid,
            speaker_id=speaker,
            features=None,
            source_text=source,
            disfluent_refs=_split_refs(disf),
            fluent_refs=_split_refs(flu),
        )
        if feat != NO_FEATURES:
            u.feature_path = str((path.parent / feat).resolve())
            if load_features:
                u.features = read_features(u.feature_path)
        utts.append(u)
    return utts


def _split_refs(fieldtext: str) -> list[str]:
    if not fieldtext:
        return []
    return fieldtext.split(REF_SEPARATOR)


def validate_train_utterances(utterances: list[Utterance]) -> None:
    """Training data must offer at least one non-empty reference per utterance."""
    for u in utterances:
        refs = u.disfluent_refs + u.fluent_refs
        if not any(r.strip() for r in refs):
            raise DataError(f"utterance {u.id} has no non-empty reference")
