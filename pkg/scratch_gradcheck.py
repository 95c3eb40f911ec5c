"""Throwaway gradient smoke check (not part of the package)."""
import numpy as np

from fluent_slt import nn
from fluent_slt.model import (
    DecoderConfig, EncoderConfig, MonoMtConfig,
    forward_backward, forward_loss, init_speech_model, init_text_model,
)
from fluent_slt.text import Vocabulary


def rel_err(a, b):
    denom = max(np.abs(a).max(initial=0), np.abs(b).max(initial=0), 1e-6)
    return np.abs(a - b).max() / denom


def check_model(model, pairs, eps=0.07):
    rng = np.random.default_rng(3)
    nn.zero_grads(model.params)
    loss0, _ = forward_backward(pairs, model, label_smoothing_eps=eps, rng=rng,
                                recurrent_dropout=0.0, char_dropout=0.0)
    worst = 0.0
    worst_name = None
    h = 1e-5
    for name, t in nn.named_tensors(model.params):
        analytic = t.g.copy()
        fd = np.zeros_like(t.v)
        it = np.nditer(t.v, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = t.v[idx]
            t.v[idx] = orig + h
            lp = forward_loss(pairs, model, label_smoothing_eps=eps, training=True)
            t.v[idx] = orig - h
            lm = forward_loss(pairs, model, label_smoothing_eps=eps, training=True)
            t.v[idx] = orig
            fd[idx] = (lp - lm) / (2 * h)
            it.iternext()
        e = rel_err(analytic, fd)
        if e > worst:
            worst, worst_name = e, name
        status = "ok " if e <= 1e-4 else "FAIL"
        print(f"{status} {name:55s} relerr={e:.3e}")
    print(f"worst: {worst_name} {worst:.3e}  loss={loss0:.4f}")
    return worst


vocab = Vocabulary(tuple(sorted("abc ")))
enc_cfg = EncoderConfig(hidden=4, input_dim=5)
dec_cfg = DecoderConfig(hidden=4, emb_dim=3, attention_hidden=4)
m = init_speech_model(vocab, enc_cfg, dec_cfg, seed=1, dtype=np.float64)

rng = np.random.default_rng(0)
pairs = []
for L, T in [(3, 6), (2, 5), (4, 3)]:
    feats = rng.standard_normal((T, 5))
    ids = [vocab.bos] + list(rng.integers(0, 4, size=L)) + [vocab.eos]
    pairs.append((feats, [int(i) for i in ids]))

print("== speech model ==")
w1 = check_model(m, pairs)

src_vocab = Vocabulary(tuple(sorted("abcz ")))
mono = MonoMtConfig(n_bilstm=2, hidden=4, emb_dim=3)
tm = init_text_model(src_vocab, vocab, mono, dec_cfg, seed=2, dtype=np.float64)
tpairs = []
for L, S in [(3, 5), (2, 4)]:
    src = [int(i) for i in rng.integers(0, src_vocab.size - 4, size=S)]
    ids = [vocab.bos] + [int(i) for i in rng.integers(0, 4, size=L)] + [vocab.eos]
    tpairs.append((src, ids))

print("== text model ==")
w2 = check_model(tm, tpairs)
print("OVERALL", "PASS" if max(w1, w2) <= 1e-4 else "FAIL")
