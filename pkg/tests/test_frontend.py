import math
import wave

import numpy as np
import pytest

from fluent_slt.errors import DataError
from fluent_slt.frontend import (
    RENDER_ALPHABET,
    CmvnStats,
    FeatureMatrix,
    FrontendConfig,
    apply_cmvn,
    compute_cmvn_stats,
    compute_fbank,
    invert_cmvn,
    mel_center_frequencies,
    read_features,
    read_wav,
    render_prototypes,
    render_synthetic_frames,
    write_features,
)

CFG = FrontendConfig()


def test_frame_count_formula():
    # 1 s at 8 kHz with 25 ms window / 10 ms hop
    feats = compute_fbank(np.zeros(8000), CFG)
    assert feats.num_frames == 1 + (8000 - 200) // 80 == 98
    assert feats.dim == 40


def test_all_zero_waveform_hits_log_floor():
    feats = compute_fbank(np.zeros(4000), CFG)
    assert np.allclose(feats.frames, CFG.log_floor)


def test_too_short_waveform_errors():
    with pytest.raises(DataError):
        compute_fbank(np.zeros(CFG.window_samples - 1), CFG)


def brute_force_mel_energies(window_samples, config):
    """Mel energies of one window via an explicit DFT sum (no fft calls)."""
    win = len(window_samples)
    n_fft = 1
    while n_fft < win:
        n_fft *= 2
    ks = np.arange(n_fft // 2 + 1)
    spectrum = np.zeros(ks.size, dtype=complex)
    padded = np.concatenate([window_samples, np.zeros(n_fft - win)])
    for k in ks:
        spectrum[k] = sum(
            padded[n] * np.exp(-2j * math.pi * k * n / n_fft) for n in range(n_fft)
        )
    power = np.abs(spectrum) ** 2
    freqs = ks * config.sample_rate_hz / n_fft

    def mel(f):
        return 2595.0 * math.log10(1.0 + f / 700.0)

    edges_mel = np.linspace(mel(0.0), mel(config.sample_rate_hz / 2), config.n_mels + 2)
    edges = 700.0 * (10.0 ** (edges_mel / 2595.0) - 1.0)
    energies = np.zeros(config.n_mels)
    for m in range(config.n_mels):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (freqs - lo) / max(mid - lo, 1e-12)
        falling = (hi - freqs) / max(hi - mid, 1e-12)
        weights = np.clip(np.minimum(rising, falling), 0.0, None)
        energies[m] = float(weights @ power)
    return energies


@pytest.mark.parametrize("k", [8, 15, 22, 31])
def test_sinusoid_peaks_at_its_filter(k):
    centers = mel_center_frequencies(CFG)
    t = np.arange(4000) / CFG.sample_rate_hz
    wave_k = np.sin(2 * math.pi * centers[k] * t)
    feats = compute_fbank(wave_k, CFG)
    mid = feats.num_frames // 2
    assert int(np.argmax(feats.frames[mid])) == k
    # cross-check the whole mel energy vector against the brute-force DFT
    start = mid * CFG.hop_samples
    window = wave_k[start : start + CFG.window_samples] * np.hamming(CFG.window_samples)
    oracle = brute_force_mel_energies(window, CFG)
    assert int(np.argmax(oracle)) == k
    ours = np.exp(feats.frames[mid].astype(np.float64))
    big = oracle > 1e-4
    assert np.allclose(ours[big], oracle[big], rtol=1e-4)


def test_translation_covariance_one_hop():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(4000)
    shifted = np.concatenate([x[CFG.hop_samples :], np.zeros(CFG.hop_samples)])
    a = compute_fbank(x, CFG).frames
    b = compute_fbank(shifted, CFG).frames
    # frame t of the shifted signal sees frame t+1 of the original (interior)
    assert np.allclose(b[: a.shape[0] - 3], a[1 : a.shape[0] - 2], atol=1e-6)


def test_cmvn_self_normalization():
    rng = np.random.default_rng(1)
    feats = FeatureMatrix(rng.standard_normal((300, 8)).astype(np.float32) * 3 + 2)
    stats = compute_cmvn_stats([feats])
    out = apply_cmvn(feats, stats)
    assert np.abs(out.frames.mean(axis=0)).max() < 1e-6
    assert np.abs(out.frames.var(axis=0) - 1).max() < 1e-4


def test_cmvn_identity_stats():
    rng = np.random.default_rng(2)
    feats = FeatureMatrix(rng.standard_normal((50, 4)).astype(np.float32))
    stats = CmvnStats(mean=np.zeros(4), var=np.ones(4), frame_count=50)
    out = apply_cmvn(feats, stats)
    assert np.allclose(out.frames, feats.frames, atol=1e-5)


def test_cmvn_constant_dimension_zeroed():
    frames = np.ones((20, 3), dtype=np.float32) * 7.0
    feats = FeatureMatrix(frames)
    stats = compute_cmvn_stats([feats])
    out = apply_cmvn(feats, stats)
    assert np.allclose(out.frames, 0.0)


def test_cmvn_dimension_mismatch():
    feats = FeatureMatrix(np.zeros((5, 3), dtype=np.float32))
    stats = CmvnStats(mean=np.zeros(4), var=np.ones(4), frame_count=5)
    with pytest.raises(ValueError):
        apply_cmvn(feats, stats)


def test_cmvn_round_trip():
    rng = np.random.default_rng(3)
    feats = FeatureMatrix(rng.standard_normal((100, 6)).astype(np.float32) * 2 + 1)
    stats = compute_cmvn_stats([feats])
    back = invert_cmvn(apply_cmvn(feats, stats), stats)
    assert np.abs(back.frames - feats.frames).max() < 1e-6


def test_cmvn_pools_across_utterances():
    a = FeatureMatrix(np.full((10, 2), 1.0, dtype=np.float32))
    b = FeatureMatrix(np.full((30, 2), 5.0, dtype=np.float32))
    stats = compute_cmvn_stats([a, b])
    assert stats.frame_count == 40
    assert np.allclose(stats.mean, 4.0)


def test_render_length_arithmetic():
    feats = render_synthetic_frames("ab", CFG, seed=0)
    assert feats.num_frames == 2 * CFG.frames_per_char


def test_render_zero_noise_exact_prototypes():
    cfg = FrontendConfig(render_noise=0.0)
    feats = render_synthetic_frames("ba", cfg, seed=9)
    protos = render_prototypes(cfg)
    k = cfg.frames_per_char
    assert np.allclose(feats.frames[:k], protos["b"])
    assert np.allclose(feats.frames[k:], protos["a"])


def test_render_deterministic_in_seed():
    a = render_synthetic_frames("abc a", CFG, seed=5)
    b = render_synthetic_frames("abc a", CFG, seed=5)
    c = render_synthetic_frames("abc a", CFG, seed=6)
    assert np.array_equal(a.frames, b.frames)
    assert not np.array_equal(a.frames, c.frames)


def test_render_rejects_unknown_character():
    with pytest.raises(ValueError):
        render_synthetic_frames("aB", CFG, seed=0)
    with pytest.raises(ValueError):
        render_synthetic_frames("", CFG, seed=0)


def test_nearest_prototype_recovers_characters():
    cfg = FrontendConfig(render_noise=0.1)
    rng = np.random.default_rng(8)
    text = "".join(rng.choice(list("abcdefghij ")) for _ in range(500))
    feats = render_synthetic_frames(text, cfg, seed=17)
    protos = render_prototypes(cfg)
    names = list(RENDER_ALPHABET)
    table = np.stack([protos[ch] for ch in names])
    # nearest-neighbor oracle, frame by frame
    d2 = ((feats.frames[:, None, :] - table[None, :, :]) ** 2).sum(axis=2)
    decoded = [names[i] for i in d2.argmin(axis=1)]
    truth = [ch for ch in text for _ in range(cfg.frames_per_char)]
    accuracy = np.mean([a == b for a, b in zip(decoded, truth)])
    assert accuracy >= 0.99


def test_feature_file_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    feats = FeatureMatrix(rng.standard_normal((37, 40)).astype(np.float32))
    path = tmp_path / "u.fbnk"
    write_features(path, feats)
    raw = path.read_bytes()
    assert raw[:4] == b"FBNK"
    assert int.from_bytes(raw[4:8], "little") == 37
    assert int.from_bytes(raw[8:12], "little") == 40
    loaded = read_features(path)
    assert np.array_equal(loaded.frames, feats.frames)


def test_feature_file_bad_magic(tmp_path):
    path = tmp_path / "bad.fbnk"
    path.write_bytes(b"JUNK" + b"\x00" * 16)
    with pytest.raises(DataError):
        read_features(path)


def test_wav_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    samples = (rng.uniform(-0.5, 0.5, size=1600) * 32767).astype("<i2")
    path = tmp_path / "x.wav"
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(8000)
        wf.writeframes(samples.tobytes())
    loaded, rate = read_wav(path)
    assert rate == 8000
    assert np.allclose(loaded, samples / 32768.0)


def test_config_validation():
    with pytest.raises(ValueError):
        FrontendConfig(window_ms=5.0, hop_ms=10.0)
    with pytest.raises(ValueError):
        FrontendConfig(n_mels=0)


def test_fbank_values_finite_random_input():
    rng = np.random.default_rng(7)
    feats = compute_fbank(rng.standard_normal(3000) * 100, CFG)
    assert np.all(np.isfinite(feats.frames))
