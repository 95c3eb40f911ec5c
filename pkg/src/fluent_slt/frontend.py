"""Acoustic frontend: log-mel filterbanks, per-speaker CMVN, synthetic frames.

Real audio goes through `compute_fbank` (Hamming window, mel triangle bank,
log energies). The desk-scale corpus instead renders characters directly to
frames with `render_synthetic_frames`: each character emits a fixed noisy
prototype vector, so the acoustic model problem stays non-trivial but small.
"""
from __future__ import annotations

import functools
import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

FEATURE_MAGIC = b"FBNK"
RENDER_ALPHABET = tuple(sorted("abcdefghijklmnopqrstuvwxyz '"))
_PROTOTYPE_SEED = 74021


@dataclass
class FrontendConfig:
    sample_rate_hz: int = 8000
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 40
    log_floor: float = -20.0
    dither: float = 0.0
    # synthetic renderer knobs
    frames_per_char: int = 4
    render_noise: float = 0.1

    def __post_init__(self):
        if self.window_ms < self.hop_ms:
            raise ValueError("window_ms must be >= hop_ms")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if self.frames_per_char < 1:
            raise ValueError("frames_per_char must be >= 1")

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate_hz * self.window_ms / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.sample_rate_hz * self.hop_ms / 1000.0))


@dataclass
class FeatureMatrix:
    frames: np.ndarray  # (T, F) float32
    frame_shift_ms: float = 10.0
    frame_len_ms: float = 25.0

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass
class CmvnStats:
    mean: np.ndarray  # (F,)
    var: np.ndarray  # (F,)
    frame_count: int

    def __post_init__(self):
        if self.frame_count <= 0:
            raise ValueError("frame_count must be positive")
        if np.any(self.var < 0):
            raise ValueError("variance must be non-negative")


CMVN_EPS = 1e-10


def _mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def _mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(config: FrontendConfig) -> np.ndarray:
    """Center frequency in Hz of each triangular mel filter."""
    edges = np.linspace(_mel(0.0), _mel(config.sample_rate_hz / 2.0), config.n_mels + 2)
    return _mel_to_hz(edges[1:-1])


@functools.lru_cache(maxsize=8)
def _mel_bank(sample_rate_hz: int, n_mels: int, n_fft: int) -> np.ndarray:
    """(n_mels, n_fft//2+1) triangular weights, peak 1, on the mel scale."""
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate_hz)
    edges = _mel_to_hz(np.linspace(_mel(0.0), _mel(sample_rate_hz / 2.0), n_mels + 2))
    bank = np.zeros((n_mels, freqs.size))
    for k in range(n_mels):
        lo, mid, hi = edges[k], edges[k + 1], edges[k + 2]
        rising = (freqs - lo) / max(mid - lo, 1e-12)
        falling = (hi - freqs) / max(hi - mid, 1e-12)
        bank[k] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def compute_fbank(waveform, config: FrontendConfig) -> FeatureMatrix:
    """Log mel-filterbank features of a mono waveform.

    Frames: T = 1 + floor((N - window) / hop). Each frame is the log of the
    mel-weighted power spectrum of the Hamming-windowed signal, floored at
    config.log_floor. Nonzero dither adds reproducible Gaussian noise before
    analysis.
    """
    x = np.asarray(waveform, dtype=np.float64).ravel()
    win = config.window_samples
    hop = config.hop_samples
    if x.size < win:
        raise DataError(f"waveform has {x.size} samples, shorter than one window ({win})")
    if config.dither > 0:
        x = x + config.dither * np.random.default_rng(0).standard_normal(x.size)
    n_frames = 1 + (x.size - win) // hop
    idx = np.arange(n_frames)[:, None] * hop + np.arange(win)[None, :]
    frames = x[idx] * np.hamming(win)
    n_fft = 1
    while n_fft < win:
        n_fft *= 2
    power = np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2
    energies = power @ _mel_bank(config.sample_rate_hz, config.n_mels, n_fft).T
    logmel = np.log(np.maximum(energies, np.exp(config.log_floor)))
    return FeatureMatrix(
        frames=logmel.astype(np.float32),
        frame_shift_ms=config.hop_ms,
        frame_len_ms=config.window_ms,
    )


def compute_cmvn_stats(feature_list: list[FeatureMatrix]) -> CmvnStats:
    """Pooled per-dimension mean/variance over all frames of one speaker."""
    if not feature_list:
        raise DataError("no features to accumulate CMVN statistics from")
    stacked = np.concatenate([f.frames.astype(np.float64) for f in feature_list], axis=0)
    return CmvnStats(
        mean=stacked.mean(axis=0),
        var=stacked.var(axis=0),
        frame_count=stacked.shape[0],
    )


def apply_cmvn(features: FeatureMatrix, stats: CmvnStats) -> FeatureMatrix:
    """(x - mean) / sqrt(var + eps), per dimension."""
    if features.dim != stats.mean.shape[0]:
        raise ValueError(
            f"feature dim {features.dim} does not match CMVN dim {stats.mean.shape[0]}"
        )
    scale = 1.0 / np.sqrt(stats.var + CMVN_EPS)
    out = (features.frames.astype(np.float64) - stats.mean) * scale
    return FeatureMatrix(out.astype(np.float32), features.frame_shift_ms, features.frame_len_ms)


def invert_cmvn(features: FeatureMatrix, stats: CmvnStats) -> FeatureMatrix:
    if features.dim != stats.mean.shape[0]:
        raise ValueError("feature dim does not match CMVN dim")
    out = features.frames.astype(np.float64) * np.sqrt(stats.var + CMVN_EPS) + stats.mean
    return FeatureMatrix(out.astype(np.float32), features.frame_shift_ms, features.frame_len_ms)


@functools.lru_cache(maxsize=8)
def _prototype_table(n_mels: int) -> np.ndarray:
    rng = np.random.default_rng(_PROTOTYPE_SEED)
    return rng.standard_normal((len(RENDER_ALPHABET), n_mels)).astype(np.float32)


def render_prototypes(config: FrontendConfig) -> dict[str, np.ndarray]:
    """Per-character prototype vectors used by the synthetic renderer."""
    table = _prototype_table(config.n_mels)
    return {ch: table[i].copy() for i, ch in enumerate(RENDER_ALPHABET)}


def render_synthetic_frames(chars: str, config: FrontendConfig, seed: int) -> FeatureMatrix:
    """Render text to frames: each character emits frames_per_char noisy
    copies of its fixed prototype vector. Deterministic in `seed`.
    """
    if not chars:
        raise ValueError("cannot render an empty string")
    table = _prototype_table(config.n_mels)
    pos = {ch: i for i, ch in enumerate(RENDER_ALPHABET)}
    try:
        rows = [pos[c] for c in chars]
    except KeyError as e:
        raise ValueError(f"character {e.args[0]!r} outside the renderer alphabet") from None
    k = config.frames_per_char
    protos = np.repeat(table[rows], k, axis=0)
    if config.render_noise > 0:
        rng = np.random.default_rng(seed)
        protos = protos + config.render_noise * rng.standard_normal(protos.shape).astype(
            np.float32
        )
    return FeatureMatrix(
        protos.astype(np.float32),
        frame_shift_ms=config.hop_ms,
        frame_len_ms=config.window_ms,
    )


def write_features(path, features: FeatureMatrix) -> None:
    """Binary feature file: "FBNK", uint32 T and F, then T*F float32 row-major.

    Everything little-endian.
    """
    frames = np.ascontiguousarray(features.frames, dtype="<f4")
    t, f = frames.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", t, f))
        fh.write(frames.tobytes())


def read_features(path, frame_shift_ms: float = 10.0, frame_len_ms: float = 25.0) -> FeatureMatrix:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != FEATURE_MAGIC:
        raise DataError(f"{path}: not a feature file (bad magic)")
    t, f = struct.unpack("<II", raw[4:12])
    data = np.frombuffer(raw[12:], dtype="<f4")
    if data.size != t * f:
        raise DataError(f"{path}: expected {t * f} values, found {data.size}")
    return FeatureMatrix(data.reshape(t, f).copy(), frame_shift_ms, frame_len_ms)


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read 16-bit PCM mono WAV into floats in [-1, 1). Returns (samples, rate)."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise DataError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise DataError(f"{path}: expected 16-bit PCM")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate
