"""Throwaway: overfit-run probe for timing and convergence."""
import sys
import time

import numpy as np

from fluent_slt.corpus import DataConfig, make_synthetic_corpus
from fluent_slt.frontend import FrontendConfig, apply_cmvn, compute_cmvn_stats, render_synthetic_frames
from fluent_slt.model import DecoderConfig, EncoderConfig, greedy_decode, init_speech_model
from fluent_slt.text import build_vocab
from fluent_slt.trainer import TrainConfig, train

t0 = time.time()
dcfg = DataConfig(disfluency_rate=0.2, seed=11, words=(2, 4), word_chars=(1, 3))
fcfg = FrontendConfig(n_mels=40, frames_per_char=4, render_noise=0.05)
utts = make_synthetic_corpus(dcfg, 64)
for i, u in enumerate(utts):
    u.features = render_synthetic_frames(u.source_text, fcfg, seed=1000 + i)
by_spk = {}
for u in utts:
    by_spk.setdefault(u.speaker_id, []).append(u)
for group in by_spk.values():
    stats = compute_cmvn_stats([u.features for u in group])
    for u in group:
        u.features = apply_cmvn(u.features, stats)

target = "disfluent_refs"
pairs = [(u.features, getattr(u, target)[0]) for u in utts]
dev = [(u.features, [getattr(u, target)[0]]) for u in utts]

vocab = build_vocab([t for _, t in pairs])
print("vocab size", vocab.size, "mean frames", np.mean([u.features.num_frames for u in utts]))

enc_cfg = EncoderConfig(hidden=64, input_dim=40)
dec_cfg = DecoderConfig(hidden=64, emb_dim=32, attention_hidden=64)
model = init_speech_model(vocab, enc_cfg, dec_cfg, seed=7)
print("params", model.parameter_count())

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 60
tcfg = TrainConfig(label_smoothing_eps=0.0, max_epochs=epochs, seed=5, dev_cap=64)
ckpt = train(pairs, dev, model, tcfg, log_stream=sys.stdout)
print(f"best bleu {ckpt.best_dev_bleu:.2f} at {ckpt.epoch}; wall {time.time()-t0:.1f}s")
hyps = [model.vocab.decode(ids) for ids in greedy_decode(model, [p[0] for p in pairs])]
em = np.mean([h == t for h, (_, t) in zip(hyps, pairs)])
print("train exact match", em)
for h, (_, t) in list(zip(hyps, pairs))[:5]:
    print(repr(t), "->", repr(h))
