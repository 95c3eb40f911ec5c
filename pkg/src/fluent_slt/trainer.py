"""Optimization loop: Adam, patience-driven LR decay on dev BLEU, dynamic batches.

The schedule halves the learning rate when the running-best validation BLEU
has not been beaten for 10 epochs (5 epochs once a decay has happened), and
training stops at max_epochs or once the rate falls below lr0/64. Batches are
formed over length-sorted utterances under a frame budget calibrated so the
mean batch size hits the configured average; batch order is reshuffled every
epoch from the run's seeded generator, which also drives the dropout masks.
There is no weight decay, no gradient noise, and a single model replica.
"""
from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics, model as model_mod, nn
from .errors import DataError, NumericalError
from .serialization import read_container, write_container


@dataclass
class TrainConfig:
    lr0: float = 0.0003
    decay_factor: float = 0.5
    patience_before_first_decay: int = 10
    patience_after: int = 5
    recurrent_dropout: float = 0.2
    char_dropout: float = 0.1
    label_smoothing_eps: float = 0.1
    avg_batch_size: int = 36
    max_epochs: int = 50
    seed: int = 1
    dev_cap: int = 500
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    min_lr_fraction: float = 1.0 / 64.0  # stop once lr drops below lr0 * this

    def __post_init__(self):
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError("decay_factor must lie in (0, 1)")
        if self.patience_before_first_decay < 1 or self.patience_after < 1:
            raise ValueError("patience values must be >= 1")
        if self.avg_batch_size < 1 or self.max_epochs < 1:
            raise ValueError("avg_batch_size and max_epochs must be >= 1")


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)  # path -> first moment
    v: dict = field(default_factory=dict)  # path -> second moment
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_optimizer(params, cfg: TrainConfig) -> OptimizerState:
    state = OptimizerState(beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
    for name, t in nn.named_tensors(params):
        state.m[name] = np.zeros_like(t.v)
        state.v[name] = np.zeros_like(t.v)
    return state


def adam_update(params, state: OptimizerState, lr: float, embedding: nn.Tensor | None = None) -> None:
    """One bias-corrected Adam step over every tensor's accumulated gradient.

    Afterwards the target embedding rows (when given) are rescaled to unit L2
    norm. Raises NumericalError naming the first parameter with a non-finite
    gradient.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name, tensor in nn.named_tensors(params):
        g = tensor.g
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        tensor.v -= (lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)
    if embedding is not None:
        nn.renormalize_embedding_rows(embedding)


def lr_schedule_step(history, config: TrainConfig) -> float:
    """Learning rate implied by a per-epoch dev BLEU history.

    Walks the history keeping the running best; a decay fires when the count
    of epochs since the last improvement or decay reaches the patience (10
    before the first decay, 5 after), halving the rate and resetting the
    counter. Improvement means strictly beating the running best.
    """
    if not history:
        raise ValueError("history must be non-empty")
    lr = config.lr0
    best = -np.inf
    stale = 0
    patience = config.patience_before_first_decay
    for bleu in history:
        if bleu > best:
            best = bleu
            stale = 0
        else:
            stale += 1
        if stale >= patience:
            lr *= config.decay_factor
            stale = 0
            patience = config.patience_after
    return lr


def _group_by_budget(lengths, budget: float):
    batches = []
    cur = []
    cost = 0.0
    for i, n in enumerate(lengths):
        if cur and cost + n > budget:
            batches.append(cur)
            cur = []
            cost = 0.0
        cur.append(i)
        cost += n
    if cur:
        batches.append(cur)
    return batches


def batch_indices_by_length(lengths, avg_batch_size: int):
    """Partition indices into length-sorted batches averaging avg_batch_size.

    The frame budget per batch is bisected so the corpus-wide mean batch size
    lands as close to the target as the corpus allows (within 10% on corpora
    that are large enough). Single oversized utterances get their own batch.
    """
    lengths = np.asarray(lengths, dtype=np.float64)
    order = np.argsort(lengths, kind="stable")
    sorted_lengths = lengths[order]
    n = len(lengths)
    if n <= avg_batch_size:
        return [list(order)]
    lo = float(sorted_lengths.max())
    hi = float(sorted_lengths.sum())
    best = None
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        batches = _group_by_budget(sorted_lengths, mid)
        mean = n / len(batches)
        if best is None or abs(mean - avg_batch_size) < abs(best[0] - avg_batch_size):
            best = (mean, mid)
        if mean < avg_batch_size:
            lo = mid
        else:
            hi = mid
    groups = _group_by_budget(sorted_lengths, best[1])
    return [[int(order[i]) for i in g] for g in groups]


def make_batches(utterances, config) -> list:
    """Group featurized utterances into dynamic batches (see batch_indices_by_length)."""
    lengths = []
    for u in utterances:
        if u.features is None:
            raise ValueError(f"utterance {u.id} is not featurized")
        lengths.append(u.features.num_frames)
    avg = config.avg_batch_size if hasattr(config, "avg_batch_size") else int(config)
    return [[utterances[i] for i in g] for g in batch_indices_by_length(lengths, avg)]


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    model: model_mod.Seq2SeqModel
    optimizer: OptimizerState | None
    epoch: int
    best_dev_bleu: float
    lr: float
    rng_state: dict | None
    history: list = field(default_factory=list)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    header = model_mod.model_header(ckpt.model)
    header["epoch"] = str(ckpt.epoch)
    header["best_dev_bleu"] = repr(float(ckpt.best_dev_bleu))
    header["lr"] = repr(float(ckpt.lr))
    header["history"] = json.dumps([repr(float(b)) for b in ckpt.history])
    arrays = model_mod.model_arrays(ckpt.model)
    if ckpt.optimizer is not None:
        header["adam.step"] = str(ckpt.optimizer.step)
        header["adam.beta1"] = repr(ckpt.optimizer.beta1)
        header["adam.beta2"] = repr(ckpt.optimizer.beta2)
        header["adam.eps"] = repr(ckpt.optimizer.eps)
        for name, m in ckpt.optimizer.m.items():
            arrays[f"adam.m:{name}"] = m
        for name, v in ckpt.optimizer.v.items():
            arrays[f"adam.v:{name}"] = v
    if ckpt.rng_state is not None:
        header["rng"] = json.dumps(ckpt.rng_state, sort_keys=True)
    write_container(path, header, arrays)


def load_checkpoint(path) -> Checkpoint:
    header, arrays = read_container(path)
    model = model_mod.model_from_header(header)
    model_mod.load_model_arrays(model, arrays)
    optimizer = None
    if "adam.step" in header:
        optimizer = OptimizerState(
            step=int(header["adam.step"]),
            beta1=float(header["adam.beta1"]),
            beta2=float(header["adam.beta2"]),
            eps=float(header["adam.eps"]),
        )
        for name, arr in arrays.items():
            if name.startswith("adam.m:"):
                optimizer.m[name[len("adam.m:") :]] = arr.copy()
            elif name.startswith("adam.v:"):
                optimizer.v[name[len("adam.v:") :]] = arr.copy()
    rng_state = json.loads(header["rng"]) if "rng" in header else None
    history = [float(b) for b in json.loads(header.get("history", "[]"))]
    return Checkpoint(
        model=model,
        optimizer=optimizer,
        epoch=int(header.get("epoch", 0)),
        best_dev_bleu=float(header.get("best_dev_bleu", "-inf")),
        lr=float(header.get("lr", "0")),
        rng_state=rng_state,
        history=history,
    )


def _snapshot(model, optimizer) -> dict:
    arrays = {k: a.copy() for k, a in model_mod.model_arrays(model).items()}
    opt = OptimizerState(
        m={k: a.copy() for k, a in optimizer.m.items()},
        v={k: a.copy() for k, a in optimizer.v.items()},
        step=optimizer.step,
        beta1=optimizer.beta1,
        beta2=optimizer.beta2,
        eps=optimizer.eps,
    )
    return {"arrays": arrays, "optimizer": opt}


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def train(
    train_pairs,
    dev_data,
    model: model_mod.Seq2SeqModel,
    config: TrainConfig,
    ckpt_dir=None,
    resume_from=None,
    log_stream=None,
) -> Checkpoint:
    """Train `model` and return the checkpoint with the best dev BLEU.

    train_pairs: list of (source, target_text); dev_data: list of
    (source, [reference strings]). Sources are feature matrices for speech
    models and source-character id lists for text models. Writes `best.ckpt`
    and `last.ckpt` under ckpt_dir when given; `resume_from` restarts from a
    last-checkpoint file bit-exactly.
    """
    if not dev_data:
        raise DataError("dev set must be non-empty")
    if not train_pairs:
        raise DataError("training set must be non-empty")
    log = log_stream if log_stream is not None else sys.stderr
    vocab = model.vocab
    encoded = [
        (src, [vocab.bos] + vocab.encode(text) + [vocab.eos]) for src, text in train_pairs
    ]
    lengths = [_source_length(src) for src, _ in train_pairs]
    batches = [
        [encoded[i] for i in group]
        for group in batch_indices_by_length(lengths, config.avg_batch_size)
    ]
    dev = dev_data[: config.dev_cap]
    dev_sources = [src for src, _ in dev]
    dev_refs = [refs for _, refs in dev]

    rng = np.random.default_rng(config.seed)
    optimizer = init_optimizer(model.params, config)
    history: list = []
    best_bleu = -np.inf
    best_snap = None
    start_epoch = 1
    lr = config.lr0

    if resume_from is not None:
        ckpt = resume_from if isinstance(resume_from, Checkpoint) else load_checkpoint(resume_from)
        _restore_into(model, ckpt.model)
        optimizer = ckpt.optimizer if ckpt.optimizer is not None else optimizer
        history = list(ckpt.history)
        best_bleu = max(history) if history else -np.inf
        start_epoch = ckpt.epoch + 1
        lr = ckpt.lr
        if ckpt.rng_state is not None:
            rng.bit_generator.state = ckpt.rng_state
        if best_bleu > -np.inf:
            best_snap = {"snapshot": _snapshot(model, optimizer), "epoch": ckpt.epoch, "bleu": best_bleu, "lr": lr, "history": list(history)}

    embed = model.params.decoder.embed
    for epoch in range(start_epoch, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(batches))
        total_loss = 0.0
        total_tokens = 0.0
        for bi in order:
            nn.zero_grads(model.params)
            loss, n_tok = model_mod.forward_backward(
                batches[bi],
                model,
                label_smoothing_eps=config.label_smoothing_eps,
                rng=rng,
                recurrent_dropout=config.recurrent_dropout,
                char_dropout=config.char_dropout,
            )
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite training loss {loss!r} at epoch {epoch}, batch {int(bi)}"
                )
            adam_update(model.params, optimizer, lr, embedding=embed)
            total_loss += loss * n_tok
            total_tokens += n_tok
        mean_loss = total_loss / total_tokens
        hyps = [vocab.decode(ids) for ids in model_mod.greedy_decode(model, dev_sources)]
        bleu = metrics.bleu_corpus(hyps, dev_refs).score
        history.append(bleu)
        new_lr = lr_schedule_step(history, config)
        elapsed = time.perf_counter() - t0
        log.write(f"{epoch}\t{mean_loss:.6f}\t{bleu:.2f}\t{lr:.6g}\t{elapsed:.2f}\n")
        if hasattr(log, "flush"):
            log.flush()
        rng_state = rng.bit_generator.state
        if bleu > best_bleu:
            best_bleu = bleu
            best_snap = {
                "snapshot": _snapshot(model, optimizer),
                "epoch": epoch,
                "bleu": bleu,
                "lr": new_lr,
                "history": list(history),
            }
            if ckpt_dir is not None:
                save_checkpoint(
                    _ckpt_path(ckpt_dir, "best"),
                    Checkpoint(model, optimizer, epoch, bleu, new_lr, rng_state, list(history)),
                )
        if ckpt_dir is not None:
            save_checkpoint(
                _ckpt_path(ckpt_dir, "last"),
                Checkpoint(model, optimizer, epoch, best_bleu, new_lr, rng_state, list(history)),
            )
        lr = new_lr
        if lr < config.lr0 * config.min_lr_fraction * (1.0 - 1e-12):
            break

    if best_snap is None:
        return Checkpoint(model, optimizer, len(history), best_bleu, lr, rng.bit_generator.state, history)
    result_model = model_mod.model_from_header(model_mod.model_header(model), dtype=model.dtype)
    model_mod.load_model_arrays(result_model, best_snap["snapshot"]["arrays"])
    return Checkpoint(
        result_model,
        best_snap["snapshot"]["optimizer"],
        best_snap["epoch"],
        best_snap["bleu"],
        best_snap["lr"],
        None,
        best_snap["history"],
    )


def _source_length(src) -> int:
    frames = getattr(src, "frames", None)
    if frames is not None:
        return frames.shape[0]
    arr = np.asarray(src)
    return arr.shape[0]


def _ckpt_path(ckpt_dir, name):
    from pathlib import Path

    d = Path(ckpt_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / f"{name}.ckpt"


def _restore_into(model: model_mod.Seq2SeqModel, source_model: model_mod.Seq2SeqModel) -> None:
    model_mod.load_model_arrays(model, model_mod.model_arrays(source_model))
