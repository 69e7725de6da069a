"""Framing, STFT/iSTFT, mel filterbanks and log-mel features."""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels

DEFAULT_SAMPLE_RATE = 16000


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError("Waveform must be mono (1-D)")
        if s.size == 0:
            raise ValueError("Waveform is empty")
        if not np.all(np.isfinite(s)):
            raise ValueError("Waveform contains non-finite samples")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate < 8000:
            raise ValueError(f"sample_rate must be an integer >= 8000, got {self.sample_rate}")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        return len(self) / self.sample_rate

    def with_samples(self, samples):
        return Waveform(samples, self.sample_rate)


@dataclass(frozen=True)
class StftConfig:
    n_fft: int = 512
    win_length: int = 512
    hop: int = 256
    window: str = "hann"
    center_pad: bool = True

    def __post_init__(self):
        if self.n_fft < 2 or self.n_fft & (self.n_fft - 1):
            raise ValueError(f"n_fft must be a power of two, got {self.n_fft}")
        if not 0 < self.hop <= self.win_length <= self.n_fft:
            raise ValueError("need 0 < hop <= win_length <= n_fft")
        if self.window not in ("hann", "rect"):
            raise ValueError(f"unknown window {self.window!r}")

    @property
    def n_bins(self):
        return self.n_fft // 2 + 1

    def n_frames(self, n_samples):
        if self.center_pad:
            return 1 + n_samples // self.hop
        if n_samples < self.n_fft:
            raise ValueError(f"signal of {n_samples} samples is shorter than one frame ({self.n_fft})")
        return 1 + (n_samples - self.n_fft) // self.hop


@dataclass(frozen=True, eq=False)
class Spectrogram:
    frames: np.ndarray  # (T, F) complex
    config: StftConfig
    sample_rate: int
    n_samples: int = field(default=0)

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != self.config.n_bins:
            raise ValueError("spectrogram bin count inconsistent with config")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("spectrogram contains non-finite entries")

    def with_frames(self, frames):
        return Spectrogram(frames, self.config, self.sample_rate, self.n_samples)


@dataclass(frozen=True, eq=False)
class MelBank:
    weights: np.ndarray  # (n_mels, F)
    fmin: float
    fmax: float
    centers_hz: np.ndarray

    @property
    def n_mels(self):
        return self.weights.shape[0]


@lru_cache(maxsize=None)
def _window_cached(name, win_length, n_fft):
    if name == "hann":
        w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win_length) / win_length)
    else:
        w = np.ones(win_length)
    full = np.zeros(n_fft)
    off = (n_fft - win_length) // 2
    full[off: off + win_length] = w
    full.flags.writeable = False
    return full


def analysis_window(cfg):
    """Periodic window of ``win_length`` centered in an ``n_fft`` buffer."""
    return _window_cached(cfg.window, cfg.win_length, cfg.n_fft)


def is_cola(cfg, rtol=1e-10):
    """True when shifted copies of the window sum to a constant at ``hop``."""
    w = analysis_window(cfg)
    if cfg.n_fft % cfg.hop:
        return False
    acc = w.reshape(-1, cfg.hop).sum(axis=0)
    return bool(np.ptp(acc) <= rtol * np.max(np.abs(acc)) and acc.max() > 0)


@lru_cache(maxsize=64)
def frame_indices(n_samples, cfg):
    """(T, n_fft) sample indices into the unpadded signal, reflection folded in."""
    t = cfg.n_frames(n_samples)
    pos = np.arange(t)[:, None] * cfg.hop + np.arange(cfg.n_fft)[None, :]
    if cfg.center_pad:
        pad = cfg.n_fft // 2
        if n_samples <= pad:
            raise ValueError(f"reflection padding of {pad} needs more than {n_samples} samples")
        pos = pos - pad
        pos = np.where(pos < 0, -pos, pos)
        pos = np.where(pos >= n_samples, 2 * (n_samples - 1) - pos, pos)
    pos.flags.writeable = False
    return pos


def frame(samples, cfg):
    """Windowed frames of a 1-D array, shape (T, n_fft)."""
    idx = frame_indices(len(samples), cfg)
    return samples[idx] * analysis_window(cfg)


def stft(w, cfg=StftConfig()):
    frames = frame(w.samples, cfg)
    return Spectrogram(kernels.rfft(frames), cfg, w.sample_rate, len(w))


def ola_envelope(cfg, n_frames):
    win = np.broadcast_to(analysis_window(cfg), (n_frames, cfg.n_fft))
    return kernels.overlap_add(win, cfg.hop)


def istft(spec, length=None):
    """Overlap-add inverse of :func:`stft`, normalized by the window envelope."""
    cfg = spec.config
    if not is_cola(cfg):
        raise ValueError(f"{cfg.window} window with hop {cfg.hop} is not COLA")
    n = length if length is not None else spec.n_samples
    frames = kernels.irfft(spec.frames, cfg.n_fft)
    t = frames.shape[0]
    out = kernels.overlap_add(frames, cfg.hop)
    env = ola_envelope(cfg, t)
    nz = env > 1e-10
    out[nz] /= env[nz]
    out[~nz] = 0.0
    start = cfg.n_fft // 2 if cfg.center_pad else 0
    if not n:
        n = len(out) - 2 * start
    out = out[start: start + n]
    if len(out) < n:
        out = np.pad(out, (0, n - len(out)))
    return Waveform(out, spec.sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=32)
def melbank(sample_rate, n_fft, n_mels, fmin=0.0, fmax=None):
    """Triangular mel filters, each row scaled to a peak of 1."""
    fmax = sample_rate / 2 if fmax is None else fmax
    if not 0 <= fmin < fmax <= sample_rate / 2:
        raise ValueError("need 0 <= fmin < fmax <= sample_rate / 2")
    if n_mels < 1:
        raise ValueError("n_mels must be positive")
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bins = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (bins[None, :] - lo) / (mid - lo)
    down = (hi - bins[None, :]) / (hi - mid)
    weights = np.maximum(0.0, np.minimum(up, down))
    peaks = weights.max(axis=1)
    if np.any(peaks <= 0):
        raise ValueError(f"{n_mels} mel bands is too many for {n_fft // 2 + 1} FFT bins")
    weights /= peaks[:, None]
    weights.flags.writeable = False
    return MelBank(weights, float(fmin), float(fmax), edges[1:-1])


def log_mel(spec, bank, floor=1e-10):
    """log10 of mel-band power per frame, floored at ``floor``."""
    frames = spec.frames if isinstance(spec, Spectrogram) else np.asarray(spec)
    if frames.shape[1] != bank.weights.shape[1]:
        raise ValueError("mel bank does not match spectrogram bin count")
    power = frames.real ** 2 + frames.imag ** 2
    return np.log10(np.maximum(power @ bank.weights.T, floor))
