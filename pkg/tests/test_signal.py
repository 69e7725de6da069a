import numpy as np
import pytest

from sqaguide.signal import (StftConfig, Spectrogram, Waveform, frame, hz_to_mel, is_cola, istft, log_mel,
                             mel_to_hz, melbank, stft)


def test_waveform_validation():
    with pytest.raises(ValueError):
        Waveform(np.zeros((2, 10)))
    with pytest.raises(ValueError):
        Waveform(np.array([]))
    with pytest.raises(ValueError):
        Waveform(np.array([0.0, np.nan]))
    with pytest.raises(ValueError):
        Waveform(np.zeros(10), sample_rate=4000)
    w = Waveform([0.0, 1.0], 16000)
    assert w.samples.dtype == np.float64 and w.duration == 2 / 16000


def test_config_validation():
    with pytest.raises(ValueError):
        StftConfig(n_fft=500)
    with pytest.raises(ValueError):
        StftConfig(512, 512, 0)
    with pytest.raises(ValueError):
        StftConfig(512, 512, 256, window="kaiser")


def test_frame_count_matches_config():
    cfg = StftConfig(512, 512, 128)
    x = np.random.default_rng(0).standard_normal(1000)
    assert frame(x, cfg).shape == (cfg.n_frames(1000), 512)
    no_pad = StftConfig(512, 512, 128, center_pad=False)
    assert frame(x, no_pad).shape == (1 + (1000 - 512) // 128, 512)
    with pytest.raises(ValueError):
        no_pad.n_frames(100)


def test_bin_centre_sine_rect_window():
    # one-sided magnitude at the bin is A * win_length / 2
    n, k, amp = 256, 10, 0.7
    cfg = StftConfig(n, n, n, "rect", center_pad=False)
    t = np.arange(4 * n)
    w = Waveform(amp * np.cos(2 * np.pi * k * t / n), 16000)
    mag = np.abs(stft(w, cfg).frames)
    assert np.allclose(mag[:, k], amp * n / 2, rtol=1e-10)
    others = np.delete(mag, k, axis=1)
    assert others.max() < 1e-9 * mag[:, k].max()


@pytest.mark.parametrize("n_fft,hop", [(512, 256), (512, 128), (1024, 256), (256, 64)])
def test_roundtrip_identity(n_fft, hop):
    cfg = StftConfig(n_fft, n_fft, hop)
    assert is_cola(cfg)
    x = np.random.default_rng(n_fft + hop).standard_normal(3001)
    y = istft(stft(Waveform(x), cfg))
    assert len(y) == len(x)
    assert np.max(np.abs(y.samples - x)) < 1e-10


def test_zero_spectrogram_gives_zero_waveform():
    cfg = StftConfig()
    spec = Spectrogram(np.zeros((9, cfg.n_bins), complex), cfg, 16000, 2048)
    assert not np.any(istft(spec).samples)


def test_non_cola_rejected():
    cfg = StftConfig(512, 512, 200)
    assert not is_cola(cfg)
    spec = stft(Waveform(np.ones(2000)), cfg)
    with pytest.raises(ValueError):
        istft(spec)


def test_mel_formula():
    assert hz_to_mel(1000.0) == pytest.approx(2595 * np.log10(1 + 1000 / 700), abs=1e-12)
    assert hz_to_mel(1000.0) == pytest.approx(999.99, abs=0.01)
    f = np.array([0.0, 100.0, 4000.0, 8000.0])
    assert np.allclose(mel_to_hz(hz_to_mel(f)), f)


def test_single_mel_band_spans_range():
    bank = melbank(16000, 512, 1, 300.0, 3000.0)
    freqs = np.arange(257) * 16000 / 512
    nz = freqs[bank.weights[0] > 0]
    assert nz.min() > 300.0 and nz.max() < 3000.0
    assert bank.weights.max() == pytest.approx(1.0)


def test_melbank_peaks_normalized_and_ordered():
    bank = melbank(16000, 512, 40)
    assert np.allclose(bank.weights.max(axis=1), 1.0)
    assert np.all(np.diff(bank.centers_hz) > 0)
    with pytest.raises(ValueError):
        melbank(16000, 32, 80)


def test_log_mel_floor_and_finiteness():
    bank = melbank(16000, 512, 40)
    zero = Spectrogram(np.zeros((5, 257), complex), StftConfig(), 16000)
    assert np.all(log_mel(zero, bank, floor=1e-10) == -10.0)
    noise = stft(Waveform(np.random.default_rng(3).standard_normal(4000)))
    lm = log_mel(noise, bank, floor=1e-10)
    assert np.all(np.isfinite(lm)) and np.all(lm >= -10.0)
    with pytest.raises(ValueError):
        log_mel(noise, melbank(16000, 1024, 40))
