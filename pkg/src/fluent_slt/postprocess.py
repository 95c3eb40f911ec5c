"""Post-processing of disfluent model output: rule-based Filter and MonoMT.

Filter deletes lexicon filler words and collapses immediately repeated
n-grams (longest first, iterated to a fixpoint, so it is idempotent). MonoMT
runs a trained monolingual text-to-text model over the output instead, which
can also reorder and drop false starts the rules cannot see.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .beam import DecodeConfig, beam_search
from .errors import DataError
from .text import normalize_text

DEFAULT_LEXICON_RESOURCE = "fillers.txt"


@dataclass
class FillerLexicon:
    words: frozenset

    def __contains__(self, token: str) -> bool:
        return token in self.words


@dataclass
class FilterConfig:
    lexicon: FillerLexicon = field(default_factory=lambda: default_lexicon())
    max_repetition_ngram: int = 3

    def __post_init__(self):
        if self.max_repetition_ngram < 1:
            raise ValueError("max_repetition_ngram must be >= 1")


def load_lexicon(path) -> FillerLexicon:
    """One filler word per line, UTF-8, '#' comments; entries are normalized."""
    words = set()
    text = Path(path).read_text(encoding="utf-8")
    for line in text.splitlines():
        entry = line.split("#", 1)[0].strip()
        if entry:
            words.add(normalize_text(entry))
    if not words:
        raise DataError(f"lexicon {path} contains no entries")
    return FillerLexicon(frozenset(words))


def default_lexicon() -> FillerLexicon:
    ref = resources.files("fluent_slt").joinpath("data", DEFAULT_LEXICON_RESOURCE)
    words = set()
    for line in ref.read_text(encoding="utf-8").splitlines():
        entry = line.split("#", 1)[0].strip()
        if entry:
            words.add(normalize_text(entry))
    return FillerLexicon(frozenset(words))


def _collapse_repeats_once(tokens, max_n):
    for n in range(min(max_n, len(tokens) // 2), 0, -1):
        for i in range(len(tokens) - 2 * n + 1):
            if tokens[i : i + n] == tokens[i + n : i + 2 * n]:
                return tokens[: i + n] + tokens[i + 2 * n :], True
    return tokens, False


def filter_disfluencies(text: str, config: FilterConfig = None) -> str:
    """Drop lexicon fillers, then collapse immediate n-gram repeats to one copy.

    Collapsing scans longest n-grams first and repeats until nothing changes,
    so "really really really" reduces fully and the result is stable under a
    second application.
    """
    if config is None:
        config = FilterConfig()
    tokens = [t for t in text.split() if t not in config.lexicon]
    changed = True
    while changed:
        tokens, changed = _collapse_repeats_once(tokens, config.max_repetition_ngram)
    return " ".join(tokens)


def monomt_postedit(disfluent_text: str, model, decode: DecodeConfig = DecodeConfig()) -> str:
    """Beam-decode a fluent rendering of the text with a trained MonoMT model.

    Characters outside the model's source vocabulary map to UNK on input;
    decoding never emits UNK.
    """
    if model.kind != "text":
        raise ValueError("monomt_postedit needs a text-to-text model")
    if not disfluent_text:
        return ""
    ids = model.src_vocab.encode(disfluent_text)
    return model.vocab.decode(beam_search(model, ids, decode))
