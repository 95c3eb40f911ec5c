"""Differentiable building blocks with hand-written backward passes.

Everything here is plain numpy: forward functions return caches, backward
functions consume them in reverse and accumulate into Tensor.g. Only the
operations this toolkit composes carry gradients; there is no general tape.

Shape conventions: batches are leading axes, time is second. Sequence ops
take a (B, T) float mask of ones over valid positions; masked positions are
carried through recurrences unchanged and zeroed in outputs.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError


class Tensor:
    """A learnable array paired with its accumulated gradient."""

    __slots__ = ("v", "g")

    def __init__(self, value):
        self.v = np.asarray(value)
        self.g = np.zeros_like(self.v)

    @property
    def shape(self):
        return self.v.shape

    def __repr__(self):
        return f"Tensor(shape={self.v.shape}, dtype={self.v.dtype})"


def named_tensors(obj, prefix: str = ""):
    """Yield (path, Tensor) for every learnable tensor under obj.

    Walk order follows dataclass field order and container indices, so it is
    deterministic; optimizers and serializers rely on that.
    """
    if isinstance(obj, Tensor):
        yield prefix, obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            yield from named_tensors(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from named_tensors(item, f"{prefix}[{i}]")
    elif isinstance(obj, dict):
        for k in sorted(obj):
            yield from named_tensors(obj[k], f"{prefix}.{k}" if prefix else str(k))


def named_buffers(obj, prefix: str = ""):
    """Yield (path, ndarray) for non-learnable state (e.g. running BN stats)."""
    if isinstance(obj, Tensor):
        return
    if isinstance(obj, np.ndarray):
        yield prefix, obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            yield from named_buffers(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from named_buffers(item, f"{prefix}[{i}]")
    elif isinstance(obj, dict):
        for k in sorted(obj):
            yield from named_buffers(obj[k], f"{prefix}.{k}" if prefix else str(k))


def zero_grads(obj) -> None:
    for _, t in named_tensors(obj):
        t.g[...] = 0


def assert_finite_grads(obj) -> None:
    for name, t in named_tensors(obj):
        if not np.all(np.isfinite(t.g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_softmax(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    z = x - m
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def softmax(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def glorot_uniform(rng, fan_in: int, fan_out: int, shape, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------
# Fused gate layout along the last axis: [input, forget, candidate, output].


@dataclass
class LstmParams:
    w_x: Tensor  # (D, 4H) input-to-hidden, all four gates
    w_h: Tensor  # (H, 4H) hidden-to-hidden
    b: Tensor  # (4H,)
    hidden: int

    def __post_init__(self):
        h = self.hidden
        if self.w_x.v.shape[1] != 4 * h or self.w_h.v.shape != (h, 4 * h) or self.b.v.shape != (4 * h,):
            raise ValueError("inconsistent LSTM parameter shapes")

    @property
    def input_dim(self) -> int:
        return self.w_x.v.shape[0]

    def _gate(self, tensor, k):
        h = self.hidden
        return tensor.v[..., k * h : (k + 1) * h]

    # per-gate views over the fused storage
    @property
    def w_x_input(self):
        return self._gate(self.w_x, 0)

    @property
    def w_x_forget(self):
        return self._gate(self.w_x, 1)

    @property
    def w_x_candidate(self):
        return self._gate(self.w_x, 2)

    @property
    def w_x_output(self):
        return self._gate(self.w_x, 3)

    @property
    def w_h_input(self):
        return self._gate(self.w_h, 0)

    @property
    def w_h_forget(self):
        return self._gate(self.w_h, 1)

    @property
    def w_h_candidate(self):
        return self._gate(self.w_h, 2)

    @property
    def w_h_output(self):
        return self._gate(self.w_h, 3)

    @property
    def b_input(self):
        return self._gate(self.b, 0)

    @property
    def b_forget(self):
        return self._gate(self.b, 1)

    @property
    def b_candidate(self):
        return self._gate(self.b, 2)

    @property
    def b_output(self):
        return self._gate(self.b, 3)


@dataclass
class BiLstmParams:
    fwd: LstmParams
    bwd: LstmParams


def init_lstm(rng, input_dim: int, hidden: int, dtype=np.float32, forget_bias: float = 1.0) -> LstmParams:
    w_x = glorot_uniform(rng, input_dim, hidden, (input_dim, 4 * hidden), dtype)
    w_h = glorot_uniform(rng, hidden, hidden, (hidden, 4 * hidden), dtype)
    b = np.zeros(4 * hidden, dtype=dtype)
    b[hidden : 2 * hidden] = forget_bias
    return LstmParams(Tensor(w_x), Tensor(w_h), Tensor(b), hidden)


def init_bilstm(rng, input_dim, hidden, dtype=np.float32) -> BiLstmParams:
    return BiLstmParams(init_lstm(rng, input_dim, hidden, dtype), init_lstm(rng, input_dim, hidden, dtype))


def lstm_step_forward(x, h_prev, c_prev, p: LstmParams, rec_mask=None):
    """One batched step. x (B, D), h/c (B, H). Returns h, c, cache."""
    hd = h_prev if rec_mask is None else h_prev * rec_mask
    a = x @ p.w_x.v + hd @ p.w_h.v + p.b.v
    hh = p.hidden
    i = sigmoid(a[:, :hh])
    f = sigmoid(a[:, hh : 2 * hh])
    g = np.tanh(a[:, 2 * hh : 3 * hh])
    o = sigmoid(a[:, 3 * hh :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    cache = (x, hd, c_prev, i, f, g, o, tc)
    return h, c, cache


def lstm_step_backward(dh, dc, cache, p: LstmParams, rec_mask=None):
    """Backward of one step. Accumulates weight grads, returns dx, dh_prev, dc_prev."""
    x, hd, c_prev, i, f, g, o, tc = cache
    do = dh * tc
    dct = dc + dh * o * (1.0 - tc * tc)
    df = dct * c_prev
    dc_prev = dct * f
    di = dct * g
    dg = dct * i
    da = np.concatenate(
        [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)], axis=1
    )
    p.w_x.g += x.T @ da
    p.w_h.g += hd.T @ da
    p.b.g += da.sum(axis=0)
    dx = da @ p.w_x.v.T
    dh_prev = da @ p.w_h.v.T
    if rec_mask is not None:
        dh_prev = dh_prev * rec_mask
    return dx, dh_prev, dc_prev


def lstm_step(x, h, c, params: LstmParams):
    """Single-vector LSTM recurrence: sigmoid gates, tanh candidate and output."""
    x = np.atleast_2d(np.asarray(x))
    h = np.atleast_2d(np.asarray(h))
    c = np.atleast_2d(np.asarray(c))
    if x.shape[1] != params.input_dim or h.shape[1] != params.hidden or c.shape[1] != params.hidden:
        raise ValueError("lstm_step: dimension mismatch with parameters")
    h2, c2, _ = lstm_step_forward(x, h, c, params)
    return h2[0], c2[0]


def lstm_seq_forward(x, mask, p: LstmParams, rec_mask=None):
    """Run an LSTM over (B, T, D) with a (B, T) validity mask.

    States at masked positions carry over unchanged, so right-padded batches
    match per-sequence computation. Outputs at masked positions are whatever
    the carried state holds; callers zero them via the mask when needed.
    """
    B, T, _ = x.shape
    H = p.hidden
    dtype = x.dtype
    pre = x.reshape(B * T, -1) @ p.w_x.v + p.b.v
    pre = pre.reshape(B, T, 4 * H)
    h = np.zeros((B, H), dtype=dtype)
    c = np.zeros((B, H), dtype=dtype)
    HS = np.zeros((B, T, H), dtype=dtype)
    I = np.zeros((B, T, H), dtype=dtype)
    F = np.zeros((B, T, H), dtype=dtype)
    G = np.zeros((B, T, H), dtype=dtype)
    O = np.zeros((B, T, H), dtype=dtype)
    TC = np.zeros((B, T, H), dtype=dtype)
    CP = np.zeros((B, T, H), dtype=dtype)
    HD = np.zeros((B, T, H), dtype=dtype)
    for t in range(T):
        hd = h if rec_mask is None else h * rec_mask
        a = pre[:, t] + hd @ p.w_h.v
        i = sigmoid(a[:, :H])
        f = sigmoid(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = sigmoid(a[:, 3 * H :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = mask[:, t : t + 1]
        I[:, t], F[:, t], G[:, t], O[:, t], TC[:, t] = i, f, g, o, tc
        CP[:, t] = c
        HD[:, t] = hd
        h = m * h_new + (1.0 - m) * h
        c = m * c_new + (1.0 - m) * c
        HS[:, t] = h
    cache = (x, mask, rec_mask, I, F, G, O, TC, CP, HD)
    return HS, cache


def lstm_seq_backward(dhs, cache, p: LstmParams):
    """Backward over a full sequence. dhs (B, T, H) upstream on the outputs."""
    x, mask, rec_mask, I, F, G, O, TC, CP, HD = cache
    B, T, H = dhs.shape
    DA = np.zeros((B, T, 4 * H), dtype=x.dtype)
    dh_carry = np.zeros((B, H), dtype=x.dtype)
    dc_carry = np.zeros((B, H), dtype=x.dtype)
    w_h_T = p.w_h.v.T
    for t in range(T - 1, -1, -1):
        m = mask[:, t : t + 1]
        dh_total = dhs[:, t] + dh_carry
        dc_total = dc_carry
        dh_new = m * dh_total
        i, f, g, o, tc, c_prev = I[:, t], F[:, t], G[:, t], O[:, t], TC[:, t], CP[:, t]
        do = dh_new * tc
        dct = m * dc_total + dh_new * o * (1.0 - tc * tc)
        df = dct * c_prev
        di = dct * g
        dg = dct * i
        da = DA[:, t]
        da[:, :H] = di * i * (1.0 - i)
        da[:, H : 2 * H] = df * f * (1.0 - f)
        da[:, 2 * H : 3 * H] = dg * (1.0 - g * g)
        da[:, 3 * H :] = do * o * (1.0 - o)
        dhd = da @ w_h_T
        if rec_mask is not None:
            dhd = dhd * rec_mask
        dh_carry = (1.0 - m) * dh_total + dhd
        dc_carry = (1.0 - m) * dc_total + dct * f
    da_flat = DA.reshape(B * T, 4 * H)
    p.w_x.g += x.reshape(B * T, -1).T @ da_flat
    p.w_h.g += HD.reshape(B * T, H).T @ da_flat
    p.b.g += da_flat.sum(axis=0)
    return (da_flat @ p.w_x.v.T).reshape(x.shape)


def bilstm_forward(x, mask, p: BiLstmParams, rec_masks=(None, None)):
    """Bidirectional LSTM; output (B, T, 2H) = concat(fwd, bwd), zeroed on padding."""
    hs_f, cache_f = lstm_seq_forward(x, mask, p.fwd, rec_masks[0])
    xr = x[:, ::-1]
    mr = mask[:, ::-1]
    rec_b = rec_masks[1]
    hs_b_rev, cache_b = lstm_seq_forward(np.ascontiguousarray(xr), np.ascontiguousarray(mr), p.bwd, rec_b)
    hs_b = hs_b_rev[:, ::-1]
    out = np.concatenate([hs_f, hs_b], axis=2) * mask[:, :, None]
    return out, (cache_f, cache_b, mask)


def bilstm_backward(dout, caches, p: BiLstmParams):
    cache_f, cache_b, mask = caches
    H = p.fwd.hidden
    dout = dout * mask[:, :, None]
    dx_f = lstm_seq_backward(np.ascontiguousarray(dout[:, :, :H]), cache_f, p.fwd)
    dhs_b = np.ascontiguousarray(dout[:, ::-1, H:])
    dx_b_rev = lstm_seq_backward(dhs_b, cache_b, p.bwd)
    return dx_f + dx_b_rev[:, ::-1]


# ---------------------------------------------------------------------------
# NiN downsampling projection
# ---------------------------------------------------------------------------


@dataclass
class NinParams:
    proj: Tensor  # (2*d_in, d_out), no bias

    @property
    def input_dim(self) -> int:
        return self.proj.v.shape[0] // 2

    @property
    def output_dim(self) -> int:
        return self.proj.v.shape[1]


def init_nin(rng, d_in: int, d_out: int, dtype=np.float32) -> NinParams:
    return NinParams(Tensor(glorot_uniform(rng, 2 * d_in, d_out, (2 * d_in, d_out), dtype)))


def nin_forward(x, lengths, p: NinParams):
    """Project concatenated adjacent frame pairs, halving the time axis.

    x (B, T, D) must be zero outside each sequence's length; odd-length
    sequences therefore pair their last frame with a zero vector. Output
    lengths are ceil(len / 2).
    """
    B, T, D = x.shape
    if T % 2 == 1:
        x = np.concatenate([x, np.zeros((B, 1, D), dtype=x.dtype)], axis=1)
        T += 1
    pairs = x.reshape(B, T // 2, 2 * D)
    out = pairs.reshape(-1, 2 * D) @ p.proj.v
    new_lengths = (lengths + 1) // 2
    return out.reshape(B, T // 2, -1), new_lengths, (pairs, (B, x.shape[1], D))


def nin_backward(dout, cache, p: NinParams):
    pairs, (B, T_pad, D) = cache
    T2 = pairs.shape[1]
    dflat = dout.reshape(B * T2, -1)
    p.proj.g += pairs.reshape(B * T2, -1).T @ dflat
    dpairs = (dflat @ p.proj.v.T).reshape(B, T_pad, D)
    return dpairs  # caller trims the possible pad frame


def nin_downsample(seq, params: NinParams):
    """Single-sequence convenience wrapper: list/array (T, D) -> (ceil(T/2), D_out)."""
    x = np.asarray(seq)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("nin_downsample expects a non-empty (T, D) sequence")
    out, _, _ = nin_forward(x[None], np.array([x.shape[0]]), params)
    return out[0]


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------


@dataclass
class BatchNormParams:
    gamma: Tensor  # (F,)
    beta: Tensor  # (F,)
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5


def init_batch_norm(dim: int, dtype=np.float32, momentum: float = 0.1, eps: float = 1e-5) -> BatchNormParams:
    return BatchNormParams(
        Tensor(np.ones(dim, dtype=dtype)),
        Tensor(np.zeros(dim, dtype=dtype)),
        np.zeros(dim, dtype=dtype),
        np.ones(dim, dtype=dtype),
        momentum,
        eps,
    )


def bn_forward(x, mask, p: BatchNormParams, training: bool):
    """Normalize per feature over all valid rows of x (N, F); mask (N,) in {0,1}.

    Training uses batch statistics over the valid rows and updates running
    stats; inference normalizes with the running statistics.
    """
    mcol = mask[:, None]
    if training:
        n = float(mask.sum())
        if n < 2:
            raise ValueError("batch_norm in training mode needs at least 2 elements")
        mean = (x * mcol).sum(axis=0) / n
        xc = (x - mean) * mcol
        var = (xc * xc).sum(axis=0) / n
        inv = 1.0 / np.sqrt(var + p.eps)
        xhat = xc * inv
        out = (p.gamma.v * xhat + p.beta.v) * mcol
        p.running_mean[...] = (1.0 - p.momentum) * p.running_mean + p.momentum * mean
        p.running_var[...] = (1.0 - p.momentum) * p.running_var + p.momentum * var
        return out.astype(x.dtype), (xhat, inv, n, mask)
    inv = 1.0 / np.sqrt(p.running_var + p.eps)
    out = (p.gamma.v * (x - p.running_mean) * inv + p.beta.v) * mcol
    return out.astype(x.dtype), (None, inv, 0.0, mask)


def bn_backward(dout, cache, p: BatchNormParams):
    xhat, inv, n, mask = cache
    if xhat is None:
        raise ValueError("batch_norm backward requires a training-mode cache")
    mcol = mask[:, None]
    dout = dout * mcol
    p.gamma.g += (dout * xhat).sum(axis=0)
    p.beta.g += dout.sum(axis=0)
    dxhat = dout * p.gamma.v
    sum_dxhat = dxhat.sum(axis=0)
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=0)
    dx = (inv / n) * (n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
    return (dx * mcol).astype(dout.dtype)


def batch_norm(batch, params: BatchNormParams, training: bool):
    """Normalize a plain (N, F) batch; returns the normalized array."""
    x = np.asarray(batch)
    out, _ = bn_forward(x, np.ones(x.shape[0], dtype=x.dtype), params, training)
    return out


def relu_forward(x):
    keep = x > 0
    return x * keep, keep


def relu_backward(dout, keep):
    return dout * keep


# ---------------------------------------------------------------------------
# MLP attention
# ---------------------------------------------------------------------------


@dataclass
class AttentionParams:
    dec_proj: Tensor  # (H_dec, A)
    enc_proj: Tensor  # (D_enc, A)
    score_v: Tensor  # (A,)

    @property
    def hidden(self) -> int:
        return self.score_v.v.shape[0]


def init_attention(rng, dec_dim: int, enc_dim: int, attn_hidden: int, dtype=np.float32) -> AttentionParams:
    return AttentionParams(
        Tensor(glorot_uniform(rng, dec_dim, attn_hidden, (dec_dim, attn_hidden), dtype)),
        Tensor(glorot_uniform(rng, enc_dim, attn_hidden, (enc_dim, attn_hidden), dtype)),
        Tensor(glorot_uniform(rng, attn_hidden, 1, (attn_hidden,), dtype)),
    )


NEG_INF_SCORE = -1e30


def attn_project_enc(enc, p: AttentionParams):
    """Precompute W_enc projections of the encoder states, (B, S, A)."""
    B, S, D = enc.shape
    return (enc.reshape(B * S, D) @ p.enc_proj.v).reshape(B, S, -1)


def attn_forward(h, enc, enc_proj, enc_mask, p: AttentionParams):
    """score_s = v . tanh(W_dec h + W_enc e_s); weights = masked softmax; context = sum w_s e_s."""
    q = h @ p.dec_proj.v  # (B, A)
    th = np.tanh(q[:, None, :] + enc_proj)  # (B, S, A)
    scores = th @ p.score_v.v  # (B, S)
    scores = np.where(enc_mask > 0, scores, NEG_INF_SCORE)
    w = softmax(scores, axis=1)
    ctx = np.einsum("bs,bsd->bd", w, enc)
    return ctx, w, (h, enc, enc_proj, enc_mask, th, w)


def attn_backward(dctx, dw_extra, cache, p: AttentionParams):
    """Backward; returns (dh, denc). dw_extra adds upstream gradient on the weights.

    The score path through the (possibly precomputed) encoder projections is
    folded back onto enc and W_enc here, so callers only accumulate denc.
    """
    h, enc, enc_proj, enc_mask, th, w = cache
    denc = w[:, :, None] * dctx[:, None, :]
    dw = np.einsum("bd,bsd->bs", dctx, enc)
    if dw_extra is not None:
        dw = dw + dw_extra
    dscores = w * (dw - (w * dw).sum(axis=1, keepdims=True))
    dscores = dscores * (enc_mask > 0)
    dth = dscores[:, :, None] * p.score_v.v
    p.score_v.g += np.einsum("bsa,bs->a", th, dscores)
    dpre = dth * (1.0 - th * th)  # (B, S, A)
    dpre_sum = dpre.sum(axis=1)  # (B, A)
    p.dec_proj.g += h.T @ dpre_sum
    dh = dpre_sum @ p.dec_proj.v.T
    B, S, A = dpre.shape
    p.enc_proj.g += enc.reshape(B * S, -1).T @ dpre.reshape(B * S, A)
    denc += (dpre.reshape(B * S, A) @ p.enc_proj.v.T).reshape(enc.shape)
    return dh, denc


def mlp_attention(dec_state, enc_states, params: AttentionParams):
    """Single-utterance attention: returns (context, weights over states)."""
    enc = np.asarray(enc_states)
    if enc.ndim != 2 or enc.shape[0] < 1:
        raise ValueError("mlp_attention expects a non-empty (S, D) state matrix")
    h = np.asarray(dec_state)[None, :]
    enc_b = enc[None]
    enc_proj = attn_project_enc(enc_b, params)
    mask = np.ones((1, enc.shape[0]), dtype=enc.dtype)
    ctx, w, _ = attn_forward(h, enc_b, enc_proj, mask, params)
    return ctx[0], w[0]


# ---------------------------------------------------------------------------
# Label-smoothed cross entropy
# ---------------------------------------------------------------------------


def ce_forward(logits, targets, weights, epsilon: float):
    """Mean label-smoothed cross entropy over weighted rows.

    logits (N, V), targets (N,) int, weights (N,) in {0,1}. The smoothed
    target puts 1 - epsilon on the gold class and epsilon/(V-1) on each other
    class. Returns (loss, cache); loss averages over sum(weights) rows.
    """
    n_tokens = float(weights.sum())
    if n_tokens <= 0:
        raise ValueError("no target tokens to compute a loss over")
    V = logits.shape[1]
    lsm = log_softmax(logits, axis=1)
    gold = lsm[np.arange(len(targets)), targets]
    if epsilon > 0 and V > 1:
        other = lsm.sum(axis=1) - gold
        per_row = -((1.0 - epsilon) * gold + epsilon / (V - 1) * other)
    else:
        per_row = -gold
    loss = float((per_row * weights).sum() / n_tokens)
    return loss, (lsm, targets, weights, epsilon, n_tokens)


def ce_backward(dloss, cache):
    lsm, targets, weights, epsilon, n_tokens = cache
    N, V = lsm.shape
    q = np.full((N, V), epsilon / (V - 1) if V > 1 else 0.0, dtype=lsm.dtype)
    q[np.arange(N), targets] = 1.0 - epsilon
    dlogits = (np.exp(lsm) - q) * (weights[:, None] * (dloss / n_tokens))
    return dlogits.astype(lsm.dtype)


def label_smoothed_ce(logits, target: int, epsilon: float) -> float:
    """Scalar loss for one distribution; see ce_forward for the formula."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must lie in [0, 1)")
    if not 0 <= target < logits.shape[0]:
        raise ValueError(f"target {target} out of range for {logits.shape[0]} classes")
    loss, _ = ce_forward(logits[None], np.array([target]), np.ones(1), epsilon)
    return loss


# ---------------------------------------------------------------------------
# Dropout
# ---------------------------------------------------------------------------


def variational_dropout_mask(shape, p: float, rng) -> np.ndarray:
    """One inverted-dropout mask, values in {0, 1/(1-p)}, reused across timesteps."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must lie in [0, 1)")
    if p == 0.0:
        return np.ones(shape, dtype=np.float32)
    keep = rng.random(shape) >= p
    return keep.astype(np.float32) / (1.0 - p)


def target_char_dropout(embedded_seq, p: float, rng):
    """Zero whole embedding vectors independently per position with probability p.

    Accepts (T, E) or (B, T, E); returns (dropped, keep_mask) where keep_mask
    broadcasts over the embedding axis.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must lie in [0, 1)")
    x = np.asarray(embedded_seq)
    if p == 0.0:
        keep = np.ones(x.shape[:-1] + (1,), dtype=x.dtype)
        return x, keep
    keep = (rng.random(x.shape[:-1]) >= p).astype(x.dtype)[..., None]
    return x * keep, keep


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------


def embedding_forward(table: Tensor, ids):
    return table.v[ids]


def embedding_backward(table: Tensor, ids, dout):
    np.add.at(table.g, ids.reshape(-1), dout.reshape(-1, table.v.shape[1]))


def renormalize_embedding_rows(table: Tensor) -> None:
    """Scale every row to unit L2 norm (in place)."""
    norms = np.linalg.norm(table.v, axis=1, keepdims=True)
    table.v /= np.maximum(norms, 1e-12)
