"""Flat key=value run configuration with section prefixes.

A config file holds lines like "train.lr0=0.0003"; '#' starts a comment.
Command-line --set overrides take the same form and win over the file.
Unknown keys are rejected. FLUENT_SLT_SEED, when set, becomes the fallback
for data.seed and train.seed unless those were given explicitly.
"""
from __future__ import annotations

import os
from pathlib import Path

from .errors import UsageError

SEED_ENV_VAR = "FLUENT_SLT_SEED"


def _parse_bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


# key -> (default, parser, help)
DEFAULTS = {
    "data.max_frames": (1500, int, "drop utterances with more feature frames than this"),
    "data.disfluency_rate": (0.2, float, "expected inserted-token fraction of disfluent text"),
    "data.filler_symbols": ("uxz", str, "filler characters, disjoint from the content alphabet"),
    "data.seed": (0, int, "corpus generation seed"),
    "data.words_min": (2, int, "min fluent words per synthetic utterance"),
    "data.words_max": (5, int, "max fluent words per synthetic utterance"),
    "data.word_chars_min": (1, int, "min characters per synthetic word"),
    "data.word_chars_max": (4, int, "max characters per synthetic word"),
    "frontend.sample_rate_hz": (8000, int, "waveform sample rate"),
    "frontend.window_ms": (25.0, float, "analysis window length"),
    "frontend.hop_ms": (10.0, float, "frame shift"),
    "frontend.n_mels": (40, int, "mel filterbank size / feature dimension"),
    "frontend.log_floor": (-20.0, float, "floor for log mel energies"),
    "frontend.dither": (0.0, float, "dither noise scale added before analysis"),
    "frontend.frames_per_char": (4, int, "synthetic renderer frames per character"),
    "frontend.render_noise": (0.1, float, "synthetic renderer noise sigma"),
    "model.task": ("slt", str, "slt (speech to text) or monomt (text to text)"),
    "model.hidden": (512, int, "hidden units throughout encoder and decoder"),
    "model.emb_dim": (64, int, "target embedding dimension"),
    "model.attention_hidden": (128, int, "attention MLP hidden layer size"),
    "model.input_feeding": (True, _parse_bool, "feed previous context into the decoder input"),
    "model.monomt_layers": (4, int, "BiLSTM layers of the monomt text encoder"),
    "train.target": ("fluent", str, "reference column used as training target: fluent or disfluent"),
    "train.lr0": (0.0003, float, "initial Adam learning rate"),
    "train.decay_factor": (0.5, float, "learning-rate decay factor"),
    "train.patience_before_first_decay": (10, int, "stale epochs before the first decay"),
    "train.patience_after": (5, int, "stale epochs for later decays"),
    "train.recurrent_dropout": (0.2, float, "variational recurrent dropout probability"),
    "train.char_dropout": (0.1, float, "target character dropout probability"),
    "train.label_smoothing_eps": (0.1, float, "label smoothing epsilon"),
    "train.avg_batch_size": (36, int, "target mean dynamic batch size"),
    "train.max_epochs": (50, int, "epoch cap"),
    "train.seed": (1, int, "training seed (init, shuffling, dropout)"),
    "train.dev_cap": (500, int, "max dev utterances decoded per epoch"),
    "decode.beam_size": (15, int, "beam width"),
    "decode.length_norm_exponent": (1.5, float, "length normalization exponent"),
    "decode.max_len_factor": (3, int, "decode length cap factor over encoder states"),
    "decode.max_len_floor": (50, int, "decode length cap floor"),
    "metrics.meteor_alpha": (0.9, float, "recall weight of the meteor harmonic mean"),
    "metrics.meteor_gamma": (0.5, float, "meteor fragmentation penalty weight"),
    "metrics.meteor_beta": (3.0, float, "meteor fragmentation penalty exponent"),
    "metrics.stem": (True, _parse_bool, "enable the stem matcher stage"),
}


class RunConfig:
    """Defaults merged with a config file and --set overrides."""

    def __init__(self, path=None, overrides=()):
        self.values = {k: d for k, (d, _, _) in DEFAULTS.items()}
        self.explicit = set()
        if path is not None:
            for key, raw in self._read_file(path):
                self._assign(key, raw, f"config file {path}")
        for item in overrides:
            key, _, raw = item.partition("=")
            if not _:
                raise UsageError(f"override {item!r} is not of the form key=value")
            self._assign(key.strip(), raw.strip(), "command line")
        env_seed = os.environ.get(SEED_ENV_VAR)
        if env_seed is not None:
            for key in ("data.seed", "train.seed"):
                if key not in self.explicit:
                    self._assign(key, env_seed, SEED_ENV_VAR)
                    self.explicit.discard(key)

    @staticmethod
    def _read_file(path):
        path = Path(path)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        pairs = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            key, sep, raw = stripped.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            pairs.append((key.strip(), raw.strip()))
        return pairs

    def _assign(self, key, raw, origin):
        if key not in DEFAULTS:
            raise UsageError(f"unknown configuration key {key!r} (from {origin})")
        _, parser, _ = DEFAULTS[key]
        try:
            self.values[key] = parser(raw)
        except ValueError as e:
            raise UsageError(f"bad value for {key} (from {origin}): {e}")
        self.explicit.add(key)

    def __getitem__(self, key):
        if key not in self.values:
            raise UsageError(f"unknown configuration key {key!r}")
        return self.values[key]

    def section(self, name: str) -> dict:
        prefix = name + "."
        return {k[len(prefix) :]: v for k, v in self.values.items() if k.startswith(prefix)}
