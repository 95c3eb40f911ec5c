"""Translation quality instruments: corpus BLEU, a METEOR-style scorer,
length statistics, and character-level diff reports.

BLEU is 4-gram word-level with clipped counts against the best reference,
the e^(1-r/c) brevity penalty (capped at 1), and an optional no-penalty
variant; the effective reference length per utterance is the one closest to
the candidate, ties resolved toward the shorter reference. No smoothing is
applied: a zero precision at any order yields a corpus score of 0 with the
per-order precisions still reported.
"""
from __future__ import annotations

import html
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError

DEFAULT_MAX_N = 4


@dataclass
class BleuStats:
    matches: list  # clipped n-gram matches, n = 1..max_n
    totals: list  # candidate n-gram counts, n = 1..max_n
    candidate_len: int = 0
    reference_len: int = 0

    @classmethod
    def zeros(cls, max_n: int = DEFAULT_MAX_N):
        return cls([0] * max_n, [0] * max_n)

    def add(self, other: "BleuStats") -> None:
        for i in range(len(self.matches)):
            self.matches[i] += other.matches[i]
            self.totals[i] += other.totals[i]
        self.candidate_len += other.candidate_len
        self.reference_len += other.reference_len


@dataclass
class BleuScore:
    score: float  # 0..100
    precisions: list
    brevity_penalty: float
    stats: BleuStats


@dataclass
class MeteorConfig:
    alpha: float = 0.9  # recall weight in the harmonic mean
    gamma: float = 0.5  # fragmentation penalty weight
    beta: float = 3.0  # fragmentation penalty exponent
    stem: bool = True
    synonyms: dict | None = None  # word -> set of interchangeable words

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0 or not 0.0 <= self.gamma <= 1.0:
            raise ValueError("alpha and gamma must lie in [0, 1]")
        if self.beta <= 0:
            raise ValueError("beta must be positive")


@dataclass
class LengthReport:
    mean_length_ratio: float  # mean tokens of A divided by mean tokens of B
    mean_token_diff: float  # mean (tokens of B - tokens of A)


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _utterance_stats(hyp_tokens, refs_tokens, max_n):
    stats = BleuStats.zeros(max_n)
    stats.candidate_len = len(hyp_tokens)
    c = len(hyp_tokens)
    best = min(refs_tokens, key=lambda r: (abs(len(r) - c), len(r)))
    stats.reference_len = len(best)
    for n in range(1, max_n + 1):
        counts = _ngrams(hyp_tokens, n)
        if not counts:
            continue
        cap = Counter()
        for r in refs_tokens:
            rc = _ngrams(r, n)
            for g, k in rc.items():
                if k > cap[g]:
                    cap[g] = k
        stats.totals[n - 1] += sum(counts.values())
        stats.matches[n - 1] += sum(min(k, cap[g]) for g, k in counts.items())
    return stats


def bleu_from_stats(stats: BleuStats, use_bp: bool = True) -> BleuScore:
    precisions = [
        (m / t if t > 0 else 0.0) for m, t in zip(stats.matches, stats.totals)
    ]
    c, r = stats.candidate_len, stats.reference_len
    if c == 0:
        bp = 0.0
    elif c >= r:
        bp = 1.0
    else:
        bp = math.exp(1.0 - r / c)
    effective_bp = bp if use_bp else 1.0
    if all(p > 0 for p in precisions):
        log_mean = sum(math.log(p) for p in precisions) / len(precisions)
        score = effective_bp * math.exp(log_mean) * 100.0
    else:
        score = 0.0
    return BleuScore(score, precisions, effective_bp, stats)


def bleu_corpus(hyps, refs, use_bp: bool = True, max_n: int = DEFAULT_MAX_N) -> BleuScore:
    """Corpus-level BLEU of hypothesis strings against reference lists.

    refs[i] is the list of references for hyps[i]; every utterance needs at
    least one. Tokenization is whitespace.
    """
    if not hyps:
        raise DataError("empty hypothesis set")
    if len(hyps) != len(refs):
        raise DataError(f"{len(hyps)} hypotheses vs {len(refs)} reference rows")
    total = BleuStats.zeros(max_n)
    for hyp, ref_group in zip(hyps, refs):
        if not ref_group:
            raise DataError("an utterance has no references")
        total.add(_utterance_stats(hyp.split(), [r.split() for r in ref_group], max_n))
    return bleu_from_stats(total, use_bp)


def single_ref_average(hyps, refs, metric) -> float:
    """Mean corpus score over the reference columns, one column at a time.

    Every utterance must carry the same number of references. `metric` is a
    corpus-level callable (hyps, single_ref_lists) -> float, or one of the
    names "bleu" / "meteor".
    """
    if not refs:
        raise DataError("no references")
    k = len(refs[0])
    if any(len(r) != k for r in refs):
        raise DataError("ragged reference counts across utterances")
    if k < 1:
        raise DataError("need at least one reference per utterance")
    if metric == "bleu":
        metric = lambda h, r: bleu_corpus(h, r).score
    elif metric == "meteor":
        metric = lambda h, r: meteor_corpus(h, r)
    scores = []
    for col in range(k):
        column_refs = [[r[col]] for r in refs]
        scores.append(metric(hyps, column_refs))
    return sum(scores) / k


# ---------------------------------------------------------------------------
# METEOR-style scoring
# ---------------------------------------------------------------------------

_STEM_SUFFIXES = ("ing", "ed", "es", "ly", "s")


def _stem(word: str) -> str:
    for suf in _STEM_SUFFIXES:
        if word.endswith(suf) and len(word) - len(suf) >= 2:
            return word[: -len(suf)]
    return word


def _align(hyp_tokens, ref_tokens, config: MeteorConfig):
    """Greedy one-to-one alignment through the matcher stages in order.

    Stage 1 matches exact words, stage 2 equal stems, stage 3 entries of the
    synonym table. Within a stage, hypothesis words are taken left to right
    and paired with the leftmost unmatched reference word.
    """
    pairs = {}
    used_ref = set()

    def run_stage(match):
        for i, hw in enumerate(hyp_tokens):
            if i in pairs:
                continue
            for j, rw in enumerate(ref_tokens):
                if j in used_ref:
                    continue
                if match(hw, rw):
                    pairs[i] = j
                    used_ref.add(j)
                    break

    run_stage(lambda a, b: a == b)
    if config.stem:
        run_stage(lambda a, b: _stem(a) == _stem(b))
    if config.synonyms:
        syn = config.synonyms
        run_stage(lambda a, b: b in syn.get(a, ()) or a in syn.get(b, ()))
    return sorted(pairs.items())


def _chunks(alignment) -> int:
    if not alignment:
        return 0
    chunks = 1
    for (h0, r0), (h1, r1) in zip(alignment, alignment[1:]):
        if h1 != h0 + 1 or r1 != r0 + 1:
            chunks += 1
    return chunks


def meteor_lite(hyp: str, ref, config: MeteorConfig = MeteorConfig()) -> float:
    """Unigram-alignment score in [0, 1]: recall-weighted harmonic mean times
    a fragmentation penalty. Multiple references score as the max over them.
    """
    if isinstance(ref, (list, tuple)):
        return max((meteor_lite(hyp, r, config) for r in ref), default=0.0)
    hyp_tokens = hyp.split()
    ref_tokens = ref.split()
    if not hyp_tokens or not ref_tokens:
        return 0.0
    alignment = _align(hyp_tokens, ref_tokens, config)
    m = len(alignment)
    if m == 0:
        return 0.0
    precision = m / len(hyp_tokens)
    recall = m / len(ref_tokens)
    f = (precision * recall) / (config.alpha * precision + (1.0 - config.alpha) * recall)
    penalty = config.gamma * (_chunks(alignment) / m) ** config.beta
    return f * (1.0 - penalty)


def meteor_corpus(hyps, refs, config: MeteorConfig = MeteorConfig()) -> float:
    """Corpus aggregate: mean utterance-level meteor_lite, scaled to 0..100."""
    if not hyps:
        raise DataError("empty hypothesis set")
    if len(hyps) != len(refs):
        raise DataError("hypothesis/reference count mismatch")
    return 100.0 * sum(meteor_lite(h, r, config) for h, r in zip(hyps, refs)) / len(hyps)


def load_synonym_table(path) -> dict:
    """Synonym file: one group of interchangeable words per line, whitespace-split."""
    table: dict = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        words = line.split()
        if len(words) < 2:
            continue
        group = set(words)
        for w in words:
            table.setdefault(w, set()).update(group - {w})
    return table


# ---------------------------------------------------------------------------
# Length statistics
# ---------------------------------------------------------------------------


def length_report(hyps_a, hyps_b) -> LengthReport:
    """Whitespace-token length comparison of two aligned hypothesis sets."""
    if len(hyps_a) != len(hyps_b):
        raise DataError("length_report needs aligned hypothesis sets")
    if not hyps_a:
        raise DataError("empty hypothesis sets")
    lens_a = [len(h.split()) for h in hyps_a]
    lens_b = [len(h.split()) for h in hyps_b]
    mean_b = sum(lens_b) / len(lens_b)
    if mean_b == 0:
        raise DataError("reference side has zero mean length")
    mean_a = sum(lens_a) / len(lens_a)
    diff = sum(b - a for a, b in zip(lens_a, lens_b)) / len(lens_a)
    return LengthReport(mean_length_ratio=mean_a / mean_b, mean_token_diff=diff)


# ---------------------------------------------------------------------------
# Character diff reports
# ---------------------------------------------------------------------------


@dataclass
class DiffPair:
    deletions: int  # characters of A absent from the alignment
    insertions: int  # characters of B absent from the alignment
    spans: list  # (op, text) with op in {"=", "-", "+"}


def _lcs_spans(a: str, b: str) -> list:
    """LCS character alignment as (op, text) spans: "=" common, "-" only in a, "+" only in b."""
    n, m = len(a), len(b)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row = dp[i]
        nxt = dp[i + 1]
        for j in range(m - 1, -1, -1):
            row[j] = nxt[j + 1] + 1 if a[i] == b[j] else max(nxt[j], row[j + 1])
    i = j = 0
    ops = []
    while i < n and j < m:
        if a[i] == b[j]:
            ops.append(("=", a[i]))
            i += 1
            j += 1
        elif dp[i + 1][j] >= dp[i][j + 1]:
            ops.append(("-", a[i]))
            i += 1
        else:
            ops.append(("+", b[j]))
            j += 1
    ops.extend(("-", ch) for ch in a[i:])
    ops.extend(("+", ch) for ch in b[j:])
    spans = []
    for op, ch in ops:
        if spans and spans[-1][0] == op:
            spans[-1][1].append(ch)
        else:
            spans.append([op, [ch]])
    return [(op, "".join(chars)) for op, chars in spans]


def diff_pair(a: str, b: str) -> DiffPair:
    spans = _lcs_spans(a, b)
    dels = sum(len(t) for op, t in spans if op == "-")
    ins = sum(len(t) for op, t in spans if op == "+")
    return DiffPair(dels, ins, spans)


_HTML_HEAD = """<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>output diff</title><style>
body { font-family: monospace; margin: 2em; }
table { border-collapse: collapse; }
td { padding: 4px 10px; vertical-align: top; border-bottom: 1px solid #ddd; }
.del { background: #ffd9d9; text-decoration: line-through; }
.ins { background: #d9ffd9; }
.idx { color: #999; }
</style></head><body>
<p>Left column: A with <span class="del">deletions</span>;
right column: B with <span class="ins">insertions</span>.</p>
<table>
"""


def diff_report(hyps_a, hyps_b, out_path, text_path=None) -> list:
    """Write an HTML (and optional plain text) character diff of two output sets.

    Returns the per-utterance DiffPair list so callers can check highlight
    totals. The highlighted character count of a pair is
    |a| + |b| - 2 * LCS(a, b).
    """
    if len(hyps_a) != len(hyps_b):
        raise DataError("diff_report needs aligned hypothesis sets")
    pairs = [diff_pair(a, b) for a, b in zip(hyps_a, hyps_b)]
    rows = []
    text_lines = []
    for i, pair in enumerate(pairs):
        left = []
        right = []
        tleft = []
        tright = []
        for op, t in pair.spans:
            esc = html.escape(t)
            if op == "=":
                left.append(esc)
                right.append(esc)
                tleft.append(t)
                tright.append(t)
            elif op == "-":
                left.append(f'<span class="del">{esc}</span>')
                tleft.append(f"[-{t}-]")
            else:
                right.append(f'<span class="ins">{esc}</span>')
                tright.append(f"{{+{t}+}}")
        rows.append(
            f'<tr><td class="idx">{i}</td><td>{"".join(left)}</td><td>{"".join(right)}</td></tr>'
        )
        text_lines.append(f"{i}\tA: {''.join(tleft)}\n\tB: {''.join(tright)}")
    Path(out_path).write_text(_HTML_HEAD + "\n".join(rows) + "\n</table></body></html>\n", encoding="utf-8")
    if text_path is not None:
        Path(text_path).write_text("\n".join(text_lines) + "\n", encoding="utf-8")
    return pairs


def format_bleu_block(result: BleuScore) -> str:
    lines = [
        f"BLEU = {result.score:.2f}",
        "precisions = " + " ".join(f"{p:.4f}" for p in result.precisions),
        f"BP = {result.brevity_penalty:.4f}",
        f"c = {result.stats.candidate_len}",
        f"r = {result.stats.reference_len}",
    ]
    return "\n".join(lines)
