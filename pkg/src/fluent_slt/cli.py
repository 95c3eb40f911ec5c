"""Command-line entry point: the whole pipeline as subcommands.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import beam as beam_mod
from . import metrics as metrics_mod
from . import model as model_mod
from . import postprocess as post_mod
from . import trainer as trainer_mod
from .config import RunConfig
from .corpus import (
    DataConfig,
    filter_long,
    make_synthetic_corpus,
    read_manifest,
    validate_train_utterances,
    write_manifest,
)
from .errors import DataError, NumericalError, UsageError
from .frontend import (
    FrontendConfig,
    apply_cmvn,
    compute_cmvn_stats,
    compute_fbank,
    read_wav,
    render_synthetic_frames,
    write_features,
)
from .text import build_vocab, normalize_text


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p):
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration key")


def build_parser() -> _Parser:
    parser = _Parser(prog="fluent-slt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic disfluent/fluent corpus")
    _add_common(p)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", required=True, help="manifest TSV to write")

    p = sub.add_parser("featurize", help="attach feature files to a manifest")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--outdir", required=True, help="directory for .fbnk files")
    p.add_argument("--out", required=True, help="featurized manifest to write")
    p.add_argument("--no-cmvn", action="store_true", help="skip per-speaker normalization")

    p = sub.add_parser("train", help="train a speech-translation or monomt model")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--resume", action="store_true", help="continue from outdir/last.ckpt")

    p = sub.add_parser("translate", help="decode a manifest with a trained model")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int, help="beam size override")
    p.add_argument("--lennorm", type=float, help="length normalization exponent override")
    p.add_argument("--greedy", action="store_true", help="greedy decoding instead of beam")

    p = sub.add_parser("filter", help="rule-based disfluency filtering of text lines")
    _add_common(p)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lexicon", help="filler lexicon file (default: built-in)")
    p.add_argument("--max-ngram", type=int, default=3)

    p = sub.add_parser("postedit", help="monomt post-editing of text lines")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int)
    p.add_argument("--lennorm", type=float)

    p = sub.add_parser("score", help="score hypotheses against references")
    _add_common(p)
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", action="append", required=True,
                   help="reference file; repeat for multiple reference columns")
    p.add_argument("--metric", choices=("bleu", "meteor"), default="bleu")
    p.add_argument("--no-bp", action="store_true", help="drop the brevity penalty")
    p.add_argument("--single-ref-average", action="store_true",
                   help="average the score over single reference columns")
    p.add_argument("--json", action="store_true", dest="as_json")

    p = sub.add_parser("diff-report", help="character-level diff of two output files")
    _add_common(p)
    p.add_argument("--a", dest="a_path", required=True)
    p.add_argument("--b", dest="b_path", required=True)
    p.add_argument("--out", required=True, help="HTML report path")
    p.add_argument("--text", help="optional plain-text report path")

    return parser


def _run_config(args) -> RunConfig:
    return RunConfig(getattr(args, "config", None), getattr(args, "set", []) or [])


def _data_config(cfg: RunConfig) -> DataConfig:
    return DataConfig(
        max_frames=cfg["data.max_frames"],
        disfluency_rate=cfg["data.disfluency_rate"],
        filler_symbols=frozenset(cfg["data.filler_symbols"]),
        seed=cfg["data.seed"],
        words=(cfg["data.words_min"], cfg["data.words_max"]),
        word_chars=(cfg["data.word_chars_min"], cfg["data.word_chars_max"]),
    )


def _frontend_config(cfg: RunConfig) -> FrontendConfig:
    f = cfg.section("frontend")
    return FrontendConfig(
        sample_rate_hz=f["sample_rate_hz"],
        window_ms=f["window_ms"],
        hop_ms=f["hop_ms"],
        n_mels=f["n_mels"],
        log_floor=f["log_floor"],
        dither=f["dither"],
        frames_per_char=f["frames_per_char"],
        render_noise=f["render_noise"],
    )


def _decode_config(cfg: RunConfig, args) -> beam_mod.DecodeConfig:
    return beam_mod.DecodeConfig(
        beam_size=getattr(args, "beam", None) or cfg["decode.beam_size"],
        length_norm_exponent=(
            args.lennorm if getattr(args, "lennorm", None) is not None
            else cfg["decode.length_norm_exponent"]
        ),
        max_len_factor=cfg["decode.max_len_factor"],
        max_len_floor=cfg["decode.max_len_floor"],
    )


def _read_lines(path) -> list:
    p = Path(path)
    if not p.exists():
        raise DataError(f"file not found: {p}")
    return p.read_text(encoding="utf-8").splitlines()


def _write_lines(path, lines) -> None:
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def cmd_synth_data(args) -> int:
    cfg = _run_config(args)
    corpus = make_synthetic_corpus(_data_config(cfg), args.size)
    write_manifest(args.out, corpus)
    print(f"wrote {len(corpus)} utterances to {args.out}")
    return 0


def cmd_featurize(args) -> int:
    cfg = _run_config(args)
    fcfg = _frontend_config(cfg)
    utts = read_manifest(args.manifest)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    data_seed = cfg["data.seed"]
    for i, u in enumerate(utts):
        if u.feature_path and u.feature_path.endswith(".wav"):
            waveform, rate = read_wav(u.feature_path)
            if rate != fcfg.sample_rate_hz:
                raise DataError(
                    f"{u.feature_path}: sample rate {rate} != configured {fcfg.sample_rate_hz}"
                )
            u.features = compute_fbank(waveform, fcfg)
        else:
            if not u.source_text:
                raise DataError(f"utterance {u.id} has no source text to render")
            seed = int(np.random.SeedSequence([data_seed, i]).generate_state(1)[0])
            u.features = render_synthetic_frames(u.source_text, fcfg, seed)
    if not args.no_cmvn:
        by_speaker = {}
        for u in utts:
            by_speaker.setdefault(u.speaker_id, []).append(u)
        for group in by_speaker.values():
            stats = compute_cmvn_stats([u.features for u in group])
            for u in group:
                u.features = apply_cmvn(u.features, stats)
    out_manifest = Path(args.out)
    for u in utts:
        feat_file = outdir / f"{u.id}.fbnk"
        write_features(feat_file, u.features)
        rel = feat_file.resolve().relative_to(out_manifest.resolve().parent) \
            if feat_file.resolve().is_relative_to(out_manifest.resolve().parent) \
            else feat_file.resolve()
        u.feature_path = str(rel)
    write_manifest(out_manifest, utts)
    print(f"featurized {len(utts)} utterances into {outdir}")
    return 0


def _target_field(cfg: RunConfig) -> str:
    target = cfg["train.target"]
    if target not in ("fluent", "disfluent"):
        raise UsageError(f"train.target must be fluent or disfluent, got {target!r}")
    return f"{target}_refs"


def _train_config(cfg: RunConfig) -> trainer_mod.TrainConfig:
    t = cfg.section("train")
    return trainer_mod.TrainConfig(
        lr0=t["lr0"],
        decay_factor=t["decay_factor"],
        patience_before_first_decay=t["patience_before_first_decay"],
        patience_after=t["patience_after"],
        recurrent_dropout=t["recurrent_dropout"],
        char_dropout=t["char_dropout"],
        label_smoothing_eps=t["label_smoothing_eps"],
        avg_batch_size=t["avg_batch_size"],
        max_epochs=t["max_epochs"],
        seed=t["seed"],
        dev_cap=t["dev_cap"],
    )


def cmd_train(args) -> int:
    cfg = _run_config(args)
    task = cfg["model.task"]
    if task not in ("slt", "monomt"):
        raise UsageError(f"model.task must be slt or monomt, got {task!r}")
    field = _target_field(cfg)
    load_feats = task == "slt"
    utts = read_manifest(args.manifest, load_features=load_feats)
    dev_utts = read_manifest(args.dev, load_features=load_feats)
    validate_train_utterances(utts)
    dec_cfg = model_mod.DecoderConfig(
        hidden=cfg["model.hidden"],
        emb_dim=cfg["model.emb_dim"],
        attention_hidden=cfg["model.attention_hidden"],
        input_feeding=cfg["model.input_feeding"],
    )
    tcfg = _train_config(cfg)
    if task == "slt":
        dcfg = _data_config(cfg)
        utts = filter_long(utts, dcfg)
        dev_utts = filter_long(dev_utts, dcfg)
        train_pairs = [(u.features, normalize_text(getattr(u, field)[0])) for u in utts]
        dev_data = [
            (u.features, [normalize_text(r) for r in getattr(u, field)]) for u in dev_utts
        ]
        vocab = build_vocab([t for _, t in train_pairs])
        enc_cfg = model_mod.EncoderConfig(
            hidden=cfg["model.hidden"], input_dim=cfg["frontend.n_mels"]
        )
        net = model_mod.init_speech_model(vocab, enc_cfg, dec_cfg, seed=tcfg.seed + 1)
    else:
        sources = [normalize_text(u.disfluent_refs[0]) for u in utts]
        targets = [normalize_text(u.fluent_refs[0]) for u in utts]
        src_vocab = build_vocab(sources)
        vocab = build_vocab(targets)
        mono_cfg = model_mod.MonoMtConfig(
            n_bilstm=cfg["model.monomt_layers"],
            hidden=cfg["model.hidden"],
            emb_dim=cfg["model.emb_dim"],
        )
        net = model_mod.init_text_model(src_vocab, vocab, mono_cfg, dec_cfg, seed=tcfg.seed + 1)
        train_pairs = [(src_vocab.encode(s), t) for s, t in zip(sources, targets)]
        dev_data = [
            (src_vocab.encode(normalize_text(u.disfluent_refs[0])),
             [normalize_text(r) for r in u.fluent_refs])
            for u in dev_utts
        ]
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    resume = outdir / "last.ckpt" if args.resume else None
    if resume is not None and not resume.exists():
        raise DataError(f"cannot resume: {resume} does not exist")
    log_path = outdir / "train.log"
    with open(log_path, "a" if args.resume else "w", encoding="utf-8") as log:
        best = trainer_mod.train(
            train_pairs, dev_data, net, tcfg,
            ckpt_dir=outdir, resume_from=resume, log_stream=_Tee(log, sys.stderr),
        )
    print(f"best dev BLEU {best.best_dev_bleu:.2f} at epoch {best.epoch}; "
          f"checkpoints in {outdir}")
    return 0


class _Tee:
    def __init__(self, *streams):
        self.streams = streams

    def write(self, text):
        for s in self.streams:
            s.write(text)

    def flush(self):
        for s in self.streams:
            if hasattr(s, "flush"):
                s.flush()


def cmd_translate(args) -> int:
    cfg = _run_config(args)
    ckpt = trainer_mod.load_checkpoint(args.model)
    net = ckpt.model
    if net.kind != "speech":
        raise UsageError("translate expects a speech model; use postedit for text models")
    utts = read_manifest(args.manifest, load_features=True)
    for u in utts:
        if u.features is None:
            raise DataError(f"utterance {u.id} has no features; run featurize first")
    dconf = _decode_config(cfg, args)
    if args.greedy:
        ids = model_mod.greedy_decode(
            net, [u.features for u in utts],
            max_len_floor=dconf.max_len_floor, max_len_factor=dconf.max_len_factor,
        )
        lines = [net.vocab.decode(seq) for seq in ids]
    else:
        lines = [
            net.vocab.decode(beam_mod.beam_search(net, u.features, dconf)) for u in utts
        ]
    _write_lines(args.out, lines)
    print(f"decoded {len(lines)} utterances to {args.out}")
    return 0


def cmd_filter(args) -> int:
    lexicon = post_mod.load_lexicon(args.lexicon) if args.lexicon else post_mod.default_lexicon()
    fconf = post_mod.FilterConfig(lexicon=lexicon, max_repetition_ngram=args.max_ngram)
    lines = [post_mod.filter_disfluencies(line, fconf) for line in _read_lines(args.in_path)]
    _write_lines(args.out, lines)
    return 0


def cmd_postedit(args) -> int:
    cfg = _run_config(args)
    ckpt = trainer_mod.load_checkpoint(args.model)
    net = ckpt.model
    if net.kind != "text":
        raise UsageError("postedit expects a monomt text model")
    dconf = _decode_config(cfg, args)
    lines = [
        post_mod.monomt_postedit(line, net, dconf) if line.strip() else ""
        for line in _read_lines(args.in_path)
    ]
    _write_lines(args.out, lines)
    return 0


def cmd_score(args) -> int:
    cfg = _run_config(args)
    hyps = _read_lines(args.hyp)
    columns = [_read_lines(r) for r in args.ref]
    for r, col in zip(args.ref, columns):
        if len(col) != len(hyps):
            raise DataError(f"{r}: {len(col)} lines but {len(hyps)} hypotheses")
    refs = [[col[i] for col in columns] for i in range(len(hyps))]
    mconf = metrics_mod.MeteorConfig(
        alpha=cfg["metrics.meteor_alpha"],
        gamma=cfg["metrics.meteor_gamma"],
        beta=cfg["metrics.meteor_beta"],
        stem=cfg["metrics.stem"],
    )
    if args.metric == "bleu":
        if args.single_ref_average:
            value = metrics_mod.single_ref_average(
                hyps, refs, lambda h, r: metrics_mod.bleu_corpus(h, r, use_bp=not args.no_bp).score
            )
            payload = {"metric": "bleu", "single_ref_average": value}
            print(json.dumps(payload) if args.as_json else f"BLEU (1ref avg) = {value:.2f}")
            return 0
        result = metrics_mod.bleu_corpus(hyps, refs, use_bp=not args.no_bp)
        if args.as_json:
            print(json.dumps({
                "metric": "bleu",
                "score": result.score,
                "precisions": result.precisions,
                "brevity_penalty": result.brevity_penalty,
                "candidate_len": result.stats.candidate_len,
                "reference_len": result.stats.reference_len,
            }))
        else:
            print(metrics_mod.format_bleu_block(result))
        return 0
    if args.single_ref_average:
        value = metrics_mod.single_ref_average(
            hyps, refs, lambda h, r: metrics_mod.meteor_corpus(h, r, mconf)
        )
    else:
        value = metrics_mod.meteor_corpus(hyps, refs, mconf)
    label = "METEOR (1ref avg)" if args.single_ref_average else "METEOR"
    print(json.dumps({"metric": "meteor", "score": value}) if args.as_json
          else f"{label} = {value:.2f}")
    return 0


def cmd_diff_report(args) -> int:
    a = _read_lines(args.a_path)
    b = _read_lines(args.b_path)
    pairs = metrics_mod.diff_report(a, b, args.out, args.text)
    total = sum(p.deletions + p.insertions for p in pairs)
    print(f"wrote {args.out} ({total} highlighted characters over {len(pairs)} utterances)")
    return 0


_COMMANDS = {
    "synth-data": cmd_synth_data,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "translate": cmd_translate,
    "filter": cmd_filter,
    "postedit": cmd_postedit,
    "score": cmd_score,
    "diff-report": cmd_diff_report,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())
