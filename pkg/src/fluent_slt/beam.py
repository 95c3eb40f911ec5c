"""Beam search with power-form length normalization.

Pruning keeps the `beam_size` best live hypotheses by raw cumulative log
probability; length normalization (logprob / length^exponent, length counting
the emitted tokens including EOS) is applied only when ranking the finished
pool. PAD, BOS and UNK are masked out of every expansion, so decoded
sequences contain content characters only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass
class DecodeConfig:
    beam_size: int = 15
    length_norm_exponent: float = 1.5
    max_len_factor: int = 3
    max_len_floor: int = 50

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.length_norm_exponent < 0:
            raise ValueError("length_norm_exponent must be >= 0")
        if self.max_len_factor < 0 or self.max_len_floor < 1:
            raise ValueError("decode length caps must be positive")


@dataclass
class Hypothesis:
    tokens: list  # emitted ids, EOS last when finished (BOS never included)
    logprob: float
    state: tuple
    context: np.ndarray
    finished: bool = False

    def normalized_score(self, exponent: float) -> float:
        n = max(len(self.tokens), 1)
        return self.logprob / (n**exponent)


def beam_search(model, source, config: DecodeConfig = DecodeConfig()):
    """Decode one utterance; returns the best content-token id list (no EOS).

    `model` must expose encode_for_search / initial_decoder_state /
    step_batch and a target vocab with pad/bos/eos/unk ids.
    """
    vocab = model.vocab
    search = model.encode_for_search(source)
    if search.n_states < 1:
        raise DataError("empty encoder output: nothing to attend to")
    max_len = max(config.max_len_floor, config.max_len_factor * search.n_states)
    state, ctx = model.initial_decoder_state(1)
    live = [Hypothesis([], 0.0, (state[0][0], state[1][0]), ctx[0])]
    finished = []
    start = True
    while live and len(finished) < config.beam_size:
        if len(live[0].tokens) >= max_len:
            break
        prev = np.array([vocab.bos if start else h.tokens[-1] for h in live])
        hs = np.stack([h.state[0] for h in live])
        cs = np.stack([h.state[1] for h in live])
        ctxs = np.stack([h.context for h in live])
        logprobs, (nh, nc), nctx = model.step_batch(prev, (hs, cs), ctxs, search)
        logprobs = np.asarray(logprobs, dtype=np.float64)
        logprobs[:, [vocab.pad, vocab.bos, vocab.unk]] = -np.inf
        totals = logprobs + np.array([h.logprob for h in live])[:, None]
        V = logprobs.shape[1]
        # EOS expansions join the pool; the live set keeps the beam_size best
        # non-EOS expansions, so finished candidates never consume live slots.
        eos_col = totals[:, vocab.eos].copy()
        order = np.argsort(-eos_col, kind="stable")[: config.beam_size]
        for b in order:
            if np.isfinite(eos_col[b]):
                h = live[b]
                finished.append(
                    Hypothesis(h.tokens + [vocab.eos], float(eos_col[b]), (nh[b], nc[b]), nctx[b], True)
                )
        totals[:, vocab.eos] = -np.inf
        flat = totals.ravel()
        k = int(min(config.beam_size, np.isfinite(flat).sum()))
        if k == 0:
            break
        top = np.argpartition(-flat, k - 1)[:k]
        top = top[np.argsort(-flat[top], kind="stable")]
        next_live = []
        for idx in top:
            b, tok = divmod(int(idx), V)
            h = live[b]
            next_live.append(
                Hypothesis(h.tokens + [tok], float(flat[idx]), (nh[b], nc[b]), nctx[b])
            )
        live = next_live
        start = False
    pool = finished if finished else live
    if not pool:
        return []
    best = max(pool, key=lambda h: h.normalized_score(config.length_norm_exponent))
    return [t for t in best.tokens if t != vocab.eos]


def beam_decode_text(model, source, config: DecodeConfig = DecodeConfig()) -> str:
    return model.vocab.decode(beam_search(model, source, config))
