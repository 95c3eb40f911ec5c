"""Shared test utilities: finite-difference checking and micro fixtures."""
import numpy as np
import pytest

from fluent_slt import nn
from fluent_slt.corpus import DataConfig, make_synthetic_corpus
from fluent_slt.frontend import (
    FrontendConfig,
    apply_cmvn,
    compute_cmvn_stats,
    render_synthetic_frames,
)
from fluent_slt.model import DecoderConfig, EncoderConfig, init_speech_model
from fluent_slt.text import Vocabulary

FD_STEP = 1e-5
FD_TOL = 1e-4


def fd_gradcheck(loss_fn, tensors, step=FD_STEP, tol=FD_TOL):
    """Compare accumulated analytic grads on `tensors` against central FD.

    loss_fn() must be deterministic and re-runnable; tensors carry the
    analytic gradients already (backward was run by the caller).
    Returns the worst relative error.
    """
    worst = 0.0
    for name, t in tensors:
        analytic = t.g.copy()
        fd = np.zeros_like(t.v)
        it = np.nditer(t.v, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = t.v[idx]
            t.v[idx] = orig + step
            lp = loss_fn()
            t.v[idx] = orig - step
            lm = loss_fn()
            t.v[idx] = orig
            fd[idx] = (lp - lm) / (2 * step)
            it.iternext()
        scale = max(np.abs(analytic).max(initial=0.0), np.abs(fd).max(initial=0.0), 1e-6)
        err = np.abs(analytic - fd).max() / scale
        assert err <= tol, f"gradient mismatch for {name}: rel err {err:.3e}"
        worst = max(worst, err)
    return worst


def micro_speech_model(hidden=4, input_dim=5, emb=3, attn=4, vocab_chars="abc ", seed=1, dtype=np.float64):
    vocab = Vocabulary(tuple(sorted(vocab_chars)))
    enc_cfg = EncoderConfig(hidden=hidden, input_dim=input_dim)
    dec_cfg = DecoderConfig(hidden=hidden, emb_dim=emb, attention_hidden=attn)
    return init_speech_model(vocab, enc_cfg, dec_cfg, seed=seed, dtype=dtype)


def random_pairs(model, shapes, seed=0):
    """(features, wrapped target ids) pairs with random contents."""
    rng = np.random.default_rng(seed)
    vocab = model.vocab
    n_content = len(vocab.chars)
    pairs = []
    for target_len, frames in shapes:
        feats = rng.standard_normal((frames, model.enc_cfg.input_dim))
        ids = [vocab.bos] + [int(i) for i in rng.integers(0, n_content, size=target_len)] + [vocab.eos]
        pairs.append((feats, ids))
    return pairs


def featurized_corpus(size, rate=0.2, seed=11, words=(2, 4), word_chars=(1, 3), noise=0.05, frames_per_char=4):
    """Synthetic utterances with rendered, speaker-normalized features."""
    dcfg = DataConfig(disfluency_rate=rate, seed=seed, words=words, word_chars=word_chars)
    fcfg = FrontendConfig(n_mels=40, frames_per_char=frames_per_char, render_noise=noise)
    utts = make_synthetic_corpus(dcfg, size)
    for i, u in enumerate(utts):
        u.features = render_synthetic_frames(u.source_text, fcfg, seed=seed * 100000 + i)
    by_speaker = {}
    for u in utts:
        by_speaker.setdefault(u.speaker_id, []).append(u)
    for group in by_speaker.values():
        stats = compute_cmvn_stats([u.features for u in group])
        for u in group:
            u.features = apply_cmvn(u.features, stats)
    return utts


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
