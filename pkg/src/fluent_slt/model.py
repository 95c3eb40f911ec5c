"""Sequence-to-sequence models: speech encoder, text encoder, attention decoder.

The speech encoder stacks [BiLSTM -> NiN pair-downsample -> batch norm ->
ReLU] blocks (each halves the time axis) and a final BiLSTM, so a run of T
frames becomes ceil(ceil(T/2)/2) states of width 2*hidden. The decoder is a
single LSTM with MLP attention and input feeding; the readout projects
concat(hidden, context) to character logits. The text variant swaps the
speech stack for embedded characters through a plain BiLSTM pile and is used
for monolingual post-editing.

Forward passes return caches; `forward_backward` drives the hand-written
backward chain end to end and accumulates parameter gradients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import DataError
from .nn import (
    AttentionParams,
    BatchNormParams,
    BiLstmParams,
    LstmParams,
    NinParams,
    Tensor,
)
from .serialization import read_container, write_container
from .text import Vocabulary


@dataclass
class EncoderConfig:
    n_bilstm: int = 3
    hidden: int = 512
    downsample_blocks: int = 2
    input_dim: int = 40

    def __post_init__(self):
        if self.n_bilstm != self.downsample_blocks + 1:
            raise ValueError("encoder needs downsample_blocks block layers plus one final BiLSTM")
        if 2**self.downsample_blocks != 4 and self.downsample_blocks != 2:
            raise ValueError("total time downsampling factor must be 4")


@dataclass
class DecoderConfig:
    n_layers: int = 1
    hidden: int = 512
    emb_dim: int = 64
    attention_hidden: int = 128
    input_feeding: bool = True

    def __post_init__(self):
        if self.n_layers != 1:
            raise ValueError("decoder uses exactly one hidden layer")


@dataclass
class MonoMtConfig:
    n_bilstm: int = 4
    hidden: int = 512
    emb_dim: int = 64


@dataclass
class EncoderBlockParams:
    bilstm: BiLstmParams
    nin: NinParams
    bn: BatchNormParams


@dataclass
class SpeechEncoderParams:
    blocks: list
    final: BiLstmParams


@dataclass
class TextEncoderParams:
    src_embed: Tensor
    layers: list


@dataclass
class DecoderParams:
    embed: Tensor  # (V, emb_dim) target embedding table, rows kept unit-norm
    lstm: LstmParams
    attn: AttentionParams
    out_w: Tensor  # (hidden + enc_dim, V)
    out_b: Tensor  # (V,)


@dataclass
class ModelParams:
    encoder: object
    decoder: DecoderParams


class Seq2SeqModel:
    """A full encoder/decoder with its vocabularies and configuration."""

    def __init__(self, kind, params, vocab, dec_cfg, enc_cfg=None, mono_cfg=None, src_vocab=None):
        if kind not in ("speech", "text"):
            raise ValueError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.params = params
        self.vocab = vocab
        self.src_vocab = src_vocab
        self.dec_cfg = dec_cfg
        self.enc_cfg = enc_cfg
        self.mono_cfg = mono_cfg

    @property
    def enc_dim(self) -> int:
        hidden = self.enc_cfg.hidden if self.kind == "speech" else self.mono_cfg.hidden
        return 2 * hidden

    @property
    def dtype(self):
        return self.params.decoder.out_w.v.dtype

    def parameter_count(self) -> int:
        return sum(t.v.size for _, t in nn.named_tensors(self.params))

    # --- search interface used by beam and greedy decoding -----------------

    def encode_for_search(self, source):
        enc, enc_mask, _ = encode_batch(self, [source], training=False)
        enc_proj = nn.attn_project_enc(enc, self.params.decoder.attn)
        return SearchContext(enc, enc_proj, enc_mask)

    def initial_decoder_state(self, n: int):
        H = self.dec_cfg.hidden
        z = np.zeros((n, H), dtype=self.dtype)
        ctx = np.zeros((n, self.enc_dim), dtype=self.dtype)
        return (z, z.copy()), ctx

    def step_batch(self, prev_ids, state, ctx, search):
        """One decode step for n hypotheses; returns (logprobs, state, ctx)."""
        dec = self.params.decoder
        n = len(prev_ids)
        enc, enc_proj, enc_mask = search.tiled(n)
        emb = nn.embedding_forward(dec.embed, np.asarray(prev_ids))
        xin = np.concatenate([emb, ctx], axis=1) if self.dec_cfg.input_feeding else emb
        h, c, _ = nn.lstm_step_forward(xin, state[0], state[1], dec.lstm)
        new_ctx, _, _ = nn.attn_forward(h, enc, enc_proj, enc_mask, dec.attn)
        logits = np.concatenate([h, new_ctx], axis=1) @ dec.out_w.v + dec.out_b.v
        logprobs = nn.log_softmax(logits, axis=1)
        return logprobs, (h, c), new_ctx


class SearchContext:
    """Frozen encoder states plus their attention projections for decoding."""

    def __init__(self, enc, enc_proj, enc_mask):
        self.enc = enc
        self.enc_proj = enc_proj
        self.enc_mask = enc_mask
        self.n_states = int(enc_mask.sum())

    def tiled(self, n: int):
        if self.enc.shape[0] == n:
            return self.enc, self.enc_proj, self.enc_mask
        reps = (n,) + (1,) * (self.enc.ndim - 1)
        return (
            np.tile(self.enc, reps),
            np.tile(self.enc_proj, reps),
            np.tile(self.enc_mask, (n, 1)),
        )


def init_speech_model(vocab: Vocabulary, enc_cfg: EncoderConfig, dec_cfg: DecoderConfig, seed=0, dtype=np.float32):
    rng = np.random.default_rng(seed)
    H = enc_cfg.hidden
    blocks = []
    d_in = enc_cfg.input_dim
    for _ in range(enc_cfg.downsample_blocks):
        bilstm = nn.init_bilstm(rng, d_in, H, dtype)
        nin = nn.init_nin(rng, 2 * H, H, dtype)
        bn = nn.init_batch_norm(H, dtype)
        blocks.append(EncoderBlockParams(bilstm, nin, bn))
        d_in = H
    final = nn.init_bilstm(rng, d_in, H, dtype)
    encoder = SpeechEncoderParams(blocks, final)
    decoder = _init_decoder(rng, vocab.size, dec_cfg, enc_dim=2 * H, dtype=dtype)
    params = ModelParams(encoder, decoder)
    return Seq2SeqModel("speech", params, vocab, dec_cfg, enc_cfg=enc_cfg)


def init_text_model(src_vocab: Vocabulary, vocab: Vocabulary, mono_cfg: MonoMtConfig, dec_cfg: DecoderConfig, seed=0, dtype=np.float32):
    rng = np.random.default_rng(seed)
    H = mono_cfg.hidden
    src_embed = Tensor(
        nn.glorot_uniform(rng, src_vocab.size, mono_cfg.emb_dim, (src_vocab.size, mono_cfg.emb_dim), dtype)
    )
    layers = []
    d_in = mono_cfg.emb_dim
    for _ in range(mono_cfg.n_bilstm):
        layers.append(nn.init_bilstm(rng, d_in, H, dtype))
        d_in = 2 * H
    encoder = TextEncoderParams(src_embed, layers)
    decoder = _init_decoder(rng, vocab.size, dec_cfg, enc_dim=2 * H, dtype=dtype)
    params = ModelParams(encoder, decoder)
    return Seq2SeqModel("text", params, vocab, dec_cfg, mono_cfg=mono_cfg, src_vocab=src_vocab)


def _init_decoder(rng, vocab_size, cfg: DecoderConfig, enc_dim: int, dtype):
    H = cfg.hidden
    embed = Tensor(rng.standard_normal((vocab_size, cfg.emb_dim)).astype(dtype))
    nn.renormalize_embedding_rows(embed)
    in_dim = cfg.emb_dim + (enc_dim if cfg.input_feeding else 0)
    lstm = nn.init_lstm(rng, in_dim, H, dtype)
    attn = nn.init_attention(rng, H, enc_dim, cfg.attention_hidden, dtype)
    out_w = Tensor(nn.glorot_uniform(rng, H + enc_dim, vocab_size, (H + enc_dim, vocab_size), dtype))
    out_b = Tensor(np.zeros(vocab_size, dtype=dtype))
    return DecoderParams(embed, lstm, attn, out_w, out_b)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def _pad_sources(model: Seq2SeqModel, sources):
    """Pad a list of per-utterance sources into one batch array plus mask."""
    dtype = model.dtype
    if model.kind == "speech":
        mats = [np.asarray(getattr(s, "frames", s), dtype=dtype) for s in sources]
        if any(m.ndim != 2 or m.shape[0] < 1 for m in mats):
            raise ValueError("every utterance needs a non-empty (T, F) feature matrix")
        dim = mats[0].shape[1]
        if any(m.shape[1] != dim for m in mats):
            raise ValueError("inconsistent feature dimensions within a batch")
        if dim != model.enc_cfg.input_dim:
            raise ValueError(f"feature dim {dim} does not match encoder input dim {model.enc_cfg.input_dim}")
        lengths = np.array([m.shape[0] for m in mats])
        x = np.zeros((len(mats), int(lengths.max()), dim), dtype=dtype)
        for i, m in enumerate(mats):
            x[i, : m.shape[0]] = m
        return x, lengths, None
    id_lists = [list(s) for s in sources]
    if any(len(ids) < 1 for ids in id_lists):
        raise ValueError("every utterance needs at least one source symbol")
    V = model.src_vocab.size
    if any(not 0 <= i < V for ids in id_lists for i in ids):
        raise ValueError("source symbol id outside the source vocabulary")
    lengths = np.array([len(ids) for ids in id_lists])
    ids = np.full((len(id_lists), int(lengths.max())), model.src_vocab.pad, dtype=np.int64)
    for i, row in enumerate(id_lists):
        ids[i, : len(row)] = row
    return ids, lengths, None


def _length_mask(lengths, tmax, dtype):
    return (np.arange(tmax)[None, :] < lengths[:, None]).astype(dtype)


def _rec_mask(rng, n, hidden, p, dtype):
    if rng is None or p <= 0:
        return None
    return nn.variational_dropout_mask((n, hidden), p, rng).astype(dtype)


def encode_batch(model: Seq2SeqModel, sources, training=False, rng=None, recurrent_dropout=0.0):
    """Encode a list of sources into (enc (B,S,2H), enc_mask (B,S), cache)."""
    x, lengths, _ = _pad_sources(model, sources)
    dtype = model.dtype
    B = x.shape[0]
    cache = {"kind": model.kind}
    if model.kind == "speech":
        enc_p: SpeechEncoderParams = model.params.encoder
        H = model.enc_cfg.hidden
        mask = _length_mask(lengths, x.shape[1], dtype)
        block_caches = []
        for block in enc_p.blocks:
            rms = (
                _rec_mask(rng, B, H, recurrent_dropout if training else 0.0, dtype),
                _rec_mask(rng, B, H, recurrent_dropout if training else 0.0, dtype),
            )
            hs, bilstm_cache = nn.bilstm_forward(x, mask, block.bilstm, rms)
            down, new_lengths, nin_cache = nn.nin_forward(hs, lengths, block.nin)
            new_mask = _length_mask(new_lengths, down.shape[1], dtype)
            flat = down.reshape(-1, down.shape[2])
            bn_out, bn_cache = nn.bn_forward(flat, new_mask.reshape(-1), block.bn, training)
            act, keep = nn.relu_forward(bn_out)
            x = act.reshape(down.shape)
            shapes = (mask, lengths)
            mask, lengths = new_mask, new_lengths
            block_caches.append((bilstm_cache, nin_cache, bn_cache, keep, shapes, down.shape))
        rms_final = (
            _rec_mask(rng, B, H, recurrent_dropout if training else 0.0, dtype),
            _rec_mask(rng, B, H, recurrent_dropout if training else 0.0, dtype),
        )
        enc, final_cache = nn.bilstm_forward(x, mask, enc_p.final, rms_final)
        cache.update(blocks=block_caches, final=final_cache, mask=mask, lengths=lengths)
        return enc, mask, cache
    enc_p: TextEncoderParams = model.params.encoder
    H = model.mono_cfg.hidden
    mask = _length_mask(lengths, x.shape[1], dtype)
    emb = nn.embedding_forward(enc_p.src_embed, x)
    h = emb * mask[:, :, None]
    layer_caches = []
    for layer in enc_p.layers:
        rms = (
            _rec_mask(rng, B, H, recurrent_dropout if training else 0.0, dtype),
            _rec_mask(rng, B, H, recurrent_dropout if training else 0.0, dtype),
        )
        h, layer_cache = nn.bilstm_forward(h, mask, layer, rms)
        layer_caches.append(layer_cache)
    cache.update(layers=layer_caches, mask=mask, src_ids=x, emb_mask=mask)
    return h, mask, cache


def encode_backward(model: Seq2SeqModel, denc, cache):
    if model.kind == "speech":
        enc_p: SpeechEncoderParams = model.params.encoder
        dx = nn.bilstm_backward(denc, cache["final"], enc_p.final)
        for block, (bilstm_cache, nin_cache, bn_cache, keep, shapes, down_shape) in zip(
            reversed(enc_p.blocks), reversed(cache["blocks"])
        ):
            dflat = nn.relu_backward(dx.reshape(-1, dx.shape[2]), keep)
            dflat = nn.bn_backward(dflat, bn_cache, block.bn)
            ddown = dflat.reshape(down_shape)
            dpairs = nn.nin_backward(ddown, nin_cache, block.nin)
            prev_mask, _ = shapes
            dpairs = dpairs[:, : prev_mask.shape[1]]
            dx = nn.bilstm_backward(dpairs, bilstm_cache, block.bilstm)
        return
    enc_p: TextEncoderParams = model.params.encoder
    dh = denc
    for layer, layer_cache in zip(reversed(enc_p.layers), reversed(cache["layers"])):
        dh = nn.bilstm_backward(dh, layer_cache, layer)
    dh = dh * cache["emb_mask"][:, :, None]
    nn.embedding_backward(enc_p.src_embed, cache["src_ids"], dh)


def encode(features, model: Seq2SeqModel):
    """Encode one utterance; returns the (S, 2*hidden) encoder state matrix."""
    enc, mask, _ = encode_batch(model, [features], training=False)
    return enc[0, : int(mask[0].sum())]


def encoded_length(t_frames: int) -> int:
    """Sequence length after the two pair-downsampling blocks."""
    if t_frames < 1:
        raise ValueError("need at least one frame")
    return -(-(-(-t_frames // 2)) // 2)


# ---------------------------------------------------------------------------
# Decoding (teacher-forced) and loss
# ---------------------------------------------------------------------------


def decoder_forward(model: Seq2SeqModel, enc, enc_mask, tgt_in, training=False, rng=None, recurrent_dropout=0.0, char_dropout=0.0):
    dec = model.params.decoder
    dtype = model.dtype
    B, L = tgt_in.shape
    H = model.dec_cfg.hidden
    emb = nn.embedding_forward(dec.embed, tgt_in)
    if training and char_dropout > 0 and rng is not None:
        emb, cd_keep = nn.target_char_dropout(emb, char_dropout, rng)
    else:
        cd_keep = None
    rec_mask = _rec_mask(rng, B, H, recurrent_dropout if training else 0.0, dtype)
    enc_proj = nn.attn_project_enc(enc, dec.attn)
    h = np.zeros((B, H), dtype=dtype)
    c = np.zeros((B, H), dtype=dtype)
    ctx = np.zeros((B, enc.shape[2]), dtype=dtype)
    lstm_caches = []
    attn_caches = []
    ro = np.zeros((B, L, H + enc.shape[2]), dtype=dtype)
    for t in range(L):
        xin = np.concatenate([emb[:, t], ctx], axis=1) if model.dec_cfg.input_feeding else emb[:, t]
        h, c, lc = nn.lstm_step_forward(xin, h, c, dec.lstm, rec_mask)
        ctx, _, ac = nn.attn_forward(h, enc, enc_proj, enc_mask, dec.attn)
        lstm_caches.append(lc)
        attn_caches.append(ac)
        ro[:, t, :H] = h
        ro[:, t, H:] = ctx
    logits = ro.reshape(B * L, -1) @ dec.out_w.v + dec.out_b.v
    cache = (tgt_in, cd_keep, rec_mask, lstm_caches, attn_caches, ro, enc.shape)
    return logits.reshape(B, L, -1), cache


def decoder_backward(model: Seq2SeqModel, dlogits, cache):
    """Backward through the decoder loop; returns denc (B, S, enc_dim)."""
    dec = model.params.decoder
    tgt_in, cd_keep, rec_mask, lstm_caches, attn_caches, ro, enc_shape = cache
    B, L, V = dlogits.shape
    H = model.dec_cfg.hidden
    E = model.dec_cfg.emb_dim
    dl_flat = dlogits.reshape(B * L, V)
    dec.out_w.g += ro.reshape(B * L, -1).T @ dl_flat
    dec.out_b.g += dl_flat.sum(axis=0)
    dro = (dl_flat @ dec.out_w.v.T).reshape(B, L, -1)
    denc = np.zeros(enc_shape, dtype=ro.dtype)
    demb = np.zeros((B, L, E), dtype=ro.dtype)
    dh_carry = np.zeros((B, H), dtype=ro.dtype)
    dc_carry = np.zeros((B, H), dtype=ro.dtype)
    dctx_carry = np.zeros((B, enc_shape[2]), dtype=ro.dtype)
    for t in range(L - 1, -1, -1):
        dctx = dro[:, t, H:] + dctx_carry
        dh_attn, denc_inc = nn.attn_backward(dctx, None, attn_caches[t], dec.attn)
        denc += denc_inc
        dh = dro[:, t, :H] + dh_attn + dh_carry
        dxin, dh_carry, dc_carry = nn.lstm_step_backward(dh, dc_carry, lstm_caches[t], dec.lstm, rec_mask)
        if model.dec_cfg.input_feeding:
            demb[:, t] = dxin[:, :E]
            dctx_carry = dxin[:, E:]
        else:
            demb[:, t] = dxin
    if cd_keep is not None:
        demb = demb * cd_keep
    nn.embedding_backward(dec.embed, tgt_in, demb)
    return denc


def _pad_targets(pairs, vocab: Vocabulary):
    for _, ids in pairs:
        if len(ids) < 2 or ids[0] != vocab.bos or ids[-1] != vocab.eos:
            raise ValueError("targets must be wrapped in BOS ... EOS")
    lens = [len(ids) - 1 for _, ids in pairs]
    L = max(lens)
    tgt_in = np.full((len(pairs), L), vocab.pad, dtype=np.int64)
    tgt_out = np.full((len(pairs), L), vocab.pad, dtype=np.int64)
    for i, (_, ids) in enumerate(pairs):
        tgt_in[i, : len(ids) - 1] = ids[:-1]
        tgt_out[i, : len(ids) - 1] = ids[1:]
    weights = (tgt_out != vocab.pad).astype(np.float64)
    return tgt_in, tgt_out, weights


def _forward(model, pairs, label_smoothing_eps, training, rng, recurrent_dropout, char_dropout):
    if not pairs:
        raise DataError("empty batch")
    sources = [src for src, _ in pairs]
    tgt_in, tgt_out, weights = _pad_targets(pairs, model.vocab)
    if weights.sum() == 0:
        raise DataError("batch contains zero target tokens")
    enc, enc_mask, enc_cache = encode_batch(model, sources, training, rng, recurrent_dropout)
    logits, dec_cache = decoder_forward(
        model, enc, enc_mask, tgt_in, training, rng, recurrent_dropout, char_dropout
    )
    B, L, V = logits.shape
    loss, ce_cache = nn.ce_forward(
        logits.reshape(B * L, V), tgt_out.reshape(-1), weights.reshape(-1), label_smoothing_eps
    )
    return loss, weights.sum(), (B, L, V, ce_cache, dec_cache, enc_cache)


def forward_loss(pairs, model: Seq2SeqModel, label_smoothing_eps=0.0, training=False, rng=None, recurrent_dropout=0.0, char_dropout=0.0):
    """Mean per-token teacher-forced loss over a batch of (source, target ids).

    Targets must include BOS/EOS; PAD positions are excluded from the mean.
    """
    loss, _, _ = _forward(model, pairs, label_smoothing_eps, training, rng, recurrent_dropout, char_dropout)
    return loss


def forward_backward(pairs, model: Seq2SeqModel, label_smoothing_eps=0.0, rng=None, recurrent_dropout=0.0, char_dropout=0.0):
    """Training step: forward with dropout, full backward, grads accumulated.

    Returns (mean per-token loss, token count).
    """
    loss, n_tokens, (B, L, V, ce_cache, dec_cache, enc_cache) = _forward(
        model, pairs, label_smoothing_eps, True, rng, recurrent_dropout, char_dropout
    )
    dlogits = nn.ce_backward(1.0, ce_cache).reshape(B, L, V).astype(model.dtype)
    denc = decoder_backward(model, dlogits, dec_cache)
    encode_backward(model, denc, enc_cache)
    return loss, n_tokens


def decode_step(prev_char: int, dec_state, prev_context, enc_states, model: Seq2SeqModel):
    """Single-utterance teacher/inference step.

    dec_state is an (h, c) pair of vectors (zeros initially), prev_context a
    vector (zeros initially). Returns (logits over V, new state, new context).
    """
    if not 0 <= prev_char < model.vocab.size:
        raise ValueError(f"character id {prev_char} outside the vocabulary")
    enc = np.asarray(enc_states, dtype=model.dtype)
    search = SearchContext(
        enc[None],
        nn.attn_project_enc(enc[None], model.params.decoder.attn),
        np.ones((1, enc.shape[0]), dtype=model.dtype),
    )
    h, c = dec_state
    state = (np.asarray(h, dtype=model.dtype)[None], np.asarray(c, dtype=model.dtype)[None])
    ctx = np.asarray(prev_context, dtype=model.dtype)[None]
    dec = model.params.decoder
    emb = nn.embedding_forward(dec.embed, np.array([prev_char]))
    xin = np.concatenate([emb, ctx], axis=1) if model.dec_cfg.input_feeding else emb
    h2, c2, _ = nn.lstm_step_forward(xin, state[0], state[1], dec.lstm)
    new_ctx, _, _ = nn.attn_forward(h2, search.enc, search.enc_proj, search.enc_mask, dec.attn)
    logits = np.concatenate([h2, new_ctx], axis=1) @ dec.out_w.v + dec.out_b.v
    return logits[0], (h2[0], c2[0]), new_ctx[0]


def greedy_decode(model: Seq2SeqModel, sources, max_len_floor=50, max_len_factor=3):
    """Batched greedy decoding; returns one content-id list per source."""
    vocab = model.vocab
    enc, enc_mask, _ = encode_batch(model, sources, training=False)
    B = enc.shape[0]
    enc_proj = nn.attn_project_enc(enc, model.params.decoder.attn)
    caps = np.maximum(max_len_floor, max_len_factor * enc_mask.sum(axis=1)).astype(int)
    dec = model.params.decoder
    h = np.zeros((B, model.dec_cfg.hidden), dtype=model.dtype)
    c = np.zeros((B, model.dec_cfg.hidden), dtype=model.dtype)
    ctx = np.zeros((B, enc.shape[2]), dtype=model.dtype)
    prev = np.full(B, vocab.bos, dtype=np.int64)
    done = np.zeros(B, dtype=bool)
    outputs = [[] for _ in range(B)]
    banned = [vocab.pad, vocab.bos, vocab.unk]
    for step in range(int(caps.max())):
        emb = nn.embedding_forward(dec.embed, prev)
        xin = np.concatenate([emb, ctx], axis=1) if model.dec_cfg.input_feeding else emb
        h, c, _ = nn.lstm_step_forward(xin, h, c, dec.lstm)
        ctx, _, _ = nn.attn_forward(h, enc, enc_proj, enc_mask, dec.attn)
        logits = np.concatenate([h, ctx], axis=1) @ dec.out_w.v + dec.out_b.v
        logits[:, banned] = -np.inf
        tok = logits.argmax(axis=1)
        for b in range(B):
            if done[b] or step >= caps[b]:
                done[b] = True
                continue
            if tok[b] == vocab.eos:
                done[b] = True
            else:
                outputs[b].append(int(tok[b]))
        if done.all():
            break
        prev = np.where(done, vocab.eos, tok)
    return outputs


def greedy_decode_text(model: Seq2SeqModel, sources, **kw) -> list:
    return [model.vocab.decode(ids) for ids in greedy_decode(model, sources, **kw)]


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def model_header(model: Seq2SeqModel) -> dict:
    header = {
        "kind": model.kind,
        "vocab": model.vocab.to_json(),
        "dec.hidden": str(model.dec_cfg.hidden),
        "dec.emb_dim": str(model.dec_cfg.emb_dim),
        "dec.attention_hidden": str(model.dec_cfg.attention_hidden),
        "dec.input_feeding": str(int(model.dec_cfg.input_feeding)),
    }
    if model.kind == "speech":
        header.update(
            {
                "enc.n_bilstm": str(model.enc_cfg.n_bilstm),
                "enc.hidden": str(model.enc_cfg.hidden),
                "enc.downsample_blocks": str(model.enc_cfg.downsample_blocks),
                "enc.input_dim": str(model.enc_cfg.input_dim),
            }
        )
    else:
        header.update(
            {
                "mono.n_bilstm": str(model.mono_cfg.n_bilstm),
                "mono.hidden": str(model.mono_cfg.hidden),
                "mono.emb_dim": str(model.mono_cfg.emb_dim),
                "src_vocab": model.src_vocab.to_json(),
            }
        )
    return header


def model_arrays(model: Seq2SeqModel) -> dict:
    arrays = {name: t.v for name, t in nn.named_tensors(model.params)}
    arrays.update({f"buf:{name}": a for name, a in nn.named_buffers(model.params)})
    return arrays


def model_from_header(header: dict, dtype=np.float32) -> Seq2SeqModel:
    vocab = Vocabulary.from_json(header["vocab"])
    dec_cfg = DecoderConfig(
        hidden=int(header["dec.hidden"]),
        emb_dim=int(header["dec.emb_dim"]),
        attention_hidden=int(header["dec.attention_hidden"]),
        input_feeding=bool(int(header["dec.input_feeding"])),
    )
    if header["kind"] == "speech":
        enc_cfg = EncoderConfig(
            n_bilstm=int(header["enc.n_bilstm"]),
            hidden=int(header["enc.hidden"]),
            downsample_blocks=int(header["enc.downsample_blocks"]),
            input_dim=int(header["enc.input_dim"]),
        )
        return init_speech_model(vocab, enc_cfg, dec_cfg, seed=0, dtype=dtype)
    mono_cfg = MonoMtConfig(
        n_bilstm=int(header["mono.n_bilstm"]),
        hidden=int(header["mono.hidden"]),
        emb_dim=int(header["mono.emb_dim"]),
    )
    src_vocab = Vocabulary.from_json(header["src_vocab"])
    return init_text_model(src_vocab, vocab, mono_cfg, dec_cfg, seed=0, dtype=dtype)


def load_model_arrays(model: Seq2SeqModel, arrays: dict) -> None:
    tensors = dict(nn.named_tensors(model.params))
    buffers = dict(nn.named_buffers(model.params))
    expected = set(tensors) | {f"buf:{n}" for n in buffers}
    provided = {n for n in arrays if not n.startswith(("adam.", "rng."))}
    if expected != provided:
        missing = expected - provided
        extra = provided - expected
        raise DataError(f"checkpoint arrays mismatch; missing={sorted(missing)[:3]} extra={sorted(extra)[:3]}")
    for name, t in tensors.items():
        if t.v.shape != arrays[name].shape:
            raise DataError(f"shape mismatch for {name}")
        t.v[...] = arrays[name].astype(t.v.dtype)
    for name, buf in buffers.items():
        buf[...] = arrays[f"buf:{name}"].astype(buf.dtype)


def save_model(path, model: Seq2SeqModel) -> None:
    write_container(path, model_header(model), model_arrays(model))


def load_model(path) -> Seq2SeqModel:
    header, arrays = read_container(path)
    model = model_from_header(header)
    load_model_arrays(model, arrays)
    return model
