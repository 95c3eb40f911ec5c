import math

import numpy as np
import pytest

from conftest import fd_gradcheck, micro_speech_model, random_pairs
from fluent_slt import nn
from fluent_slt.errors import DataError
from fluent_slt.model import (
    DecoderConfig,
    EncoderConfig,
    MonoMtConfig,
    Seq2SeqModel,
    decode_step,
    encode,
    encoded_length,
    forward_backward,
    forward_loss,
    greedy_decode,
    init_speech_model,
    init_text_model,
    load_model,
    save_model,
)
from fluent_slt.text import Vocabulary, build_vocab


def test_encoder_length_law_small_range():
    model = micro_speech_model(hidden=3, input_dim=4, dtype=np.float32)
    rng = np.random.default_rng(0)
    feats = [rng.standard_normal((t, 4)).astype(np.float32) for t in range(1, 65)]
    for t, f in zip(range(1, 65), feats):
        states = encode(f, model)
        assert states.shape == (math.ceil(math.ceil(t / 2) / 2), 6)
        assert states.shape[0] == encoded_length(t)


def test_encoder_length_law_1500():
    model = micro_speech_model(hidden=2, input_dim=3, dtype=np.float32)
    feats = np.random.default_rng(1).standard_normal((1500, 3)).astype(np.float32)
    assert encode(feats, model).shape[0] == 375


def test_encode_empty_input_errors():
    model = micro_speech_model()
    with pytest.raises(ValueError):
        encode(np.zeros((0, 5)), model)


def test_decode_step_shapes_and_purity():
    model = micro_speech_model(dtype=np.float64)
    rng = np.random.default_rng(2)
    enc = encode(rng.standard_normal((6, 5)), model)
    h = np.zeros(model.dec_cfg.hidden)
    c = np.zeros(model.dec_cfg.hidden)
    ctx = np.zeros(model.enc_dim)
    logits1, state1, ctx1 = decode_step(model.vocab.bos, (h, c), ctx, enc, model)
    logits2, _, _ = decode_step(model.vocab.bos, (h, c), ctx, enc, model)
    assert logits1.shape == (model.vocab.size,)
    assert np.array_equal(logits1, logits2)
    assert state1[0].shape == (model.dec_cfg.hidden,)
    assert ctx1.shape == (model.enc_dim,)


def test_decode_step_rejects_out_of_vocab():
    model = micro_speech_model()
    enc = encode(np.random.default_rng(3).standard_normal((4, 5)).astype(np.float32), model)
    with pytest.raises(ValueError):
        decode_step(model.vocab.size, (np.zeros(4), np.zeros(4)), np.zeros(8), enc, model)


def test_teacher_forced_loss_matches_stepwise_oracle():
    """Re-compute the batched loss by stepping the decoder one call at a time."""
    model = micro_speech_model(dtype=np.float64, seed=5)
    vocab = model.vocab
    rng = np.random.default_rng(6)
    feats = rng.standard_normal((7, 5))
    ids = [vocab.bos, 0, 2, 1, vocab.eos]
    eps = 0.1
    batched = forward_loss([(feats, ids)], model, label_smoothing_eps=eps)

    enc = encode(feats, model)
    h = np.zeros(model.dec_cfg.hidden)
    c = np.zeros(model.dec_cfg.hidden)
    ctx = np.zeros(model.enc_dim)
    total = 0.0
    for prev, target in zip(ids[:-1], ids[1:]):
        logits, (h, c), ctx = decode_step(prev, (h, c), ctx, enc, model)
        total += nn.label_smoothed_ce(logits, target, eps)
    assert batched == pytest.approx(total / (len(ids) - 1), rel=1e-10)


def test_untrained_loss_near_log_v():
    vocab = Vocabulary(tuple(sorted("abcdefghijklmnop")))  # V = 20
    enc_cfg = EncoderConfig(hidden=6, input_dim=5)
    dec_cfg = DecoderConfig(hidden=6, emb_dim=4, attention_hidden=5)
    model = init_speech_model(vocab, enc_cfg, dec_cfg, seed=8, dtype=np.float64)
    assert vocab.size == 20
    pairs = random_pairs(model, [(6, 8), (5, 10), (4, 6), (6, 9)], seed=9)
    loss = forward_loss(pairs, model)
    assert loss == pytest.approx(math.log(20), abs=0.3)


def test_single_utterance_batch_equals_unbatched():
    model = micro_speech_model(dtype=np.float64, seed=10)
    pairs = random_pairs(model, [(3, 6)], seed=11)
    a = forward_loss(pairs, model, label_smoothing_eps=0.1)
    b = forward_loss([pairs[0]], model, label_smoothing_eps=0.1)
    assert a == b


def test_batch_permutation_leaves_mean_loss():
    model = micro_speech_model(dtype=np.float64, seed=12)
    pairs = random_pairs(model, [(3, 6), (5, 9), (2, 4)], seed=13)
    a = forward_loss(pairs, model, label_smoothing_eps=0.1)
    b = forward_loss(pairs[::-1], model, label_smoothing_eps=0.1)
    assert a == pytest.approx(b, abs=1e-6)


def test_zero_target_tokens_errors():
    model = micro_speech_model()
    with pytest.raises(DataError):
        forward_loss([], model)
    with pytest.raises(ValueError):
        # unwrapped targets are rejected
        forward_loss([(np.zeros((4, 5), dtype=np.float32), [0, 1])], model)


def test_composed_gradients_speech_micro_model():
    model = micro_speech_model(hidden=4, input_dim=5, emb=3, attn=4, seed=1, dtype=np.float64)
    pairs = random_pairs(model, [(3, 6), (2, 5), (4, 4)], seed=0)

    def loss():
        return forward_loss(pairs, model, label_smoothing_eps=0.07, training=True)

    nn.zero_grads(model.params)
    forward_backward(pairs, model, label_smoothing_eps=0.07)
    fd_gradcheck(loss, list(nn.named_tensors(model.params)))


def test_composed_gradients_text_micro_model():
    src_vocab = Vocabulary(tuple(sorted("abz ")))
    tgt_vocab = Vocabulary(tuple(sorted("ab ")))
    mono_cfg = MonoMtConfig(n_bilstm=2, hidden=4, emb_dim=3)
    dec_cfg = DecoderConfig(hidden=4, emb_dim=3, attention_hidden=4)
    model = init_text_model(src_vocab, tgt_vocab, mono_cfg, dec_cfg, seed=3, dtype=np.float64)
    rng = np.random.default_rng(4)
    pairs = []
    for L, S in [(3, 5), (2, 4)]:
        src = [int(i) for i in rng.integers(0, len(src_vocab.chars), size=S)]
        ids = [tgt_vocab.bos] + [int(i) for i in rng.integers(0, len(tgt_vocab.chars), size=L)] + [tgt_vocab.eos]
        pairs.append((src, ids))

    def loss():
        return forward_loss(pairs, model, label_smoothing_eps=0.07, training=True)

    nn.zero_grads(model.params)
    forward_backward(pairs, model, label_smoothing_eps=0.07)
    fd_gradcheck(loss, list(nn.named_tensors(model.params)))


def test_input_feeding_parameter_count_difference():
    vocab = Vocabulary(tuple(sorted("abc ")))
    enc_cfg = EncoderConfig(hidden=6, input_dim=5)
    with_if = init_speech_model(
        vocab, enc_cfg, DecoderConfig(hidden=6, emb_dim=4, attention_hidden=5), seed=0
    )
    without = init_speech_model(
        vocab, enc_cfg,
        DecoderConfig(hidden=6, emb_dim=4, attention_hidden=5, input_feeding=False),
        seed=0,
    )
    diff = with_if.parameter_count() - without.parameter_count()
    # the four gate input matrices each gain enc_dim columns
    assert diff == 4 * (2 * enc_cfg.hidden) * 6


def test_monomt_encoder_preserves_length():
    src_vocab = Vocabulary(tuple(sorted("ab ")))
    tgt_vocab = Vocabulary(tuple(sorted("ab ")))
    model = init_text_model(
        src_vocab, tgt_vocab, MonoMtConfig(n_bilstm=4, hidden=3, emb_dim=2),
        DecoderConfig(hidden=3, emb_dim=2, attention_hidden=3), seed=1,
    )
    search = model.encode_for_search([0, 1, 0, 2, 1])
    assert search.n_states == 5


def test_greedy_decode_never_emits_specials():
    model = micro_speech_model(seed=20)
    rng = np.random.default_rng(21)
    sources = [rng.standard_normal((t, 5)).astype(np.float32) for t in (5, 9, 3)]
    outs = greedy_decode(model, sources, max_len_floor=12)
    vocab = model.vocab
    for ids in outs:
        assert all(i < len(vocab.chars) for i in ids)
        assert len(ids) <= 12


def test_model_save_load_round_trip(tmp_path):
    model = micro_speech_model(seed=30, dtype=np.float32)
    path = tmp_path / "model.ckpt"
    save_model(path, model)
    loaded = load_model(path)
    assert loaded.kind == "speech"
    assert loaded.vocab.chars == model.vocab.chars
    for (n1, t1), (n2, t2) in zip(
        nn.named_tensors(model.params), nn.named_tensors(loaded.params)
    ):
        assert n1 == n2
        assert np.array_equal(t1.v, t2.v)
    # loaded model reproduces the original's behavior bit for bit
    feats = np.random.default_rng(31).standard_normal((6, 5)).astype(np.float32)
    a = greedy_decode(model, [feats], max_len_floor=8)
    b = greedy_decode(loaded, [feats], max_len_floor=8)
    assert a == b
    save_model(tmp_path / "again.ckpt", loaded)
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_text_model_save_load(tmp_path):
    src_vocab = build_vocab(["az b"])
    tgt_vocab = build_vocab(["ab "])
    model = init_text_model(
        src_vocab, tgt_vocab, MonoMtConfig(n_bilstm=2, hidden=3, emb_dim=2),
        DecoderConfig(hidden=3, emb_dim=2, attention_hidden=3), seed=2,
    )
    path = tmp_path / "mono.ckpt"
    save_model(path, model)
    loaded = load_model(path)
    assert loaded.kind == "text"
    assert loaded.src_vocab.chars == src_vocab.chars


def test_encoder_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(n_bilstm=4, downsample_blocks=2)
    with pytest.raises(ValueError):
        DecoderConfig(n_layers=2)
