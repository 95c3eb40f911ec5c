"""Text normalization and character vocabularies.

All model targets are character sequences over a normalized alphabet:
lowercase, punctuation stripped except apostrophes, single spaces.
"""
from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field

from .errors import DataError

APOSTROPHE = "'"
RIGHT_SINGLE_QUOTE = "’"

PAD_SYMBOL = "<pad>"
BOS_SYMBOL = "<s>"
EOS_SYMBOL = "</s>"
UNK_SYMBOL = "<unk>"


def normalize_text(raw: str) -> str:
    """Lowercase, drop punctuation except apostrophes, collapse whitespace.

    U+2019 (right single quote) is folded into U+0027 first so apostrophe
    spelling variants do not fragment the vocabulary. Punctuation means the
    Unicode P* general categories; accented letters and digits survive.
    Idempotent.
    """
    s = raw.replace(RIGHT_SINGLE_QUOTE, APOSTROPHE).lower()
    kept = []
    for ch in s:
        if ch != APOSTROPHE and unicodedata.category(ch).startswith("P"):
            continue
        kept.append(ch)
    return " ".join("".join(kept).split())


@dataclass
class Vocabulary:
    """Bijective character-to-index map with trailing special tokens.

    Content characters occupy indices 0..len(chars)-1 in codepoint order;
    PAD, BOS, EOS, UNK follow in that order.
    """

    chars: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if list(self.chars) != sorted(set(self.chars)):
            raise ValueError("vocabulary characters must be unique and sorted by codepoint")
        if any(len(c) != 1 for c in self.chars):
            raise ValueError("vocabulary entries must be single characters")
        self._index = {c: i for i, c in enumerate(self.chars)}

    @property
    def entries(self) -> dict[str, int]:
        return dict(self._index)

    @property
    def pad(self) -> int:
        return len(self.chars)

    @property
    def bos(self) -> int:
        return len(self.chars) + 1

    @property
    def eos(self) -> int:
        return len(self.chars) + 2

    @property
    def unk(self) -> int:
        return len(self.chars) + 3

    @property
    def size(self) -> int:
        return len(self.chars) + 4

    def __contains__(self, ch: str) -> bool:
        return ch in self._index

    def encode(self, text: str) -> list[int]:
        """Map characters to indices; characters outside the alphabet map to UNK."""
        unk = self.unk
        return [self._index.get(c, unk) for c in text]

    def decode(self, ids: list[int]) -> str:
        """Map indices back to characters, skipping special tokens."""
        n = len(self.chars)
        return "".join(self.chars[i] for i in ids if 0 <= i < n)

    def to_json(self) -> str:
        return json.dumps(list(self.chars), ensure_ascii=True)

    @classmethod
    def from_json(cls, payload: str) -> "Vocabulary":
        return cls(tuple(json.loads(payload)))


def build_vocab(texts: list[str]) -> Vocabulary:
    """Collect every character occurring in `texts` into a Vocabulary.

    Texts are expected to be normalized already. Raises DataError when the
    corpus contributes no characters at all.
    """
    seen = set()
    for t in texts:
        seen.update(t)
    if not seen:
        raise DataError("empty corpus: no characters to build a vocabulary from")
    return Vocabulary(tuple(sorted(seen)))
