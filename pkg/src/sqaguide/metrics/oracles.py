"""Deterministic intrusive and text metrics."""
from functools import lru_cache
from math import gcd

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.signal

from .. import kernels
from ..signal import StftConfig, Waveform, log_mel, melbank, stft

DB_CAP = 100.0
LSD_CONFIG = StftConfig(512, 512, 256, "hann", True)


def _as_array(w):
    return w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)


def _pair(ref, est):
    r, e = _as_array(ref), _as_array(est)
    if r.shape != e.shape or r.ndim != 1:
        raise ValueError(f"reference and estimate lengths differ: {r.shape} vs {e.shape}")
    return r, e


def _capped_db(signal_energy, noise_energy):
    if noise_energy <= 0:
        return DB_CAP
    if signal_energy <= 0:
        return -DB_CAP
    return float(np.clip(10.0 * np.log10(signal_energy / noise_energy), -DB_CAP, DB_CAP))


def sdr(ref, est, filter_len=512):
    """SDR after projecting ``est`` on causal FIR-filtered copies of ``ref``.

    The length-``filter_len`` filter is the least-squares solution of the
    (truncated) convolution system, so gains and delays shorter than the
    filter are absorbed. Result is capped at +-100 dB.
    """
    r, e = _pair(ref, est)
    if len(r) < filter_len:
        raise ValueError(f"signals shorter than the filter length {filter_len}")
    if not np.any(r):
        raise ValueError("all-zero reference makes the normal equations singular")
    gram, xc = kernels.fir_normal_equations(r, e, filter_len)
    try:
        b = scipy.linalg.solve(gram, xc, assume_a="sym")
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular normal equations") from exc
    proj = np.convolve(r, b)[: len(r)]
    return _capped_db(float(proj @ proj), float(np.sum((e - proj) ** 2)))


def si_snr(ref, est):
    """Scale-invariant SNR of zero-mean signals, capped at +-100 dB."""
    r, e = _pair(ref, est)
    r = r - r.mean()
    e = e - e.mean()
    energy = float(r @ r)
    if energy == 0:
        raise ValueError("zero reference")
    target = (float(e @ r) / energy) * r
    return _capped_db(float(target @ target), float(np.sum((e - target) ** 2)))


def lsd(ref, est, cfg=LSD_CONFIG, eps=1e-10, sample_rate=16000):
    """Log-spectral distance in dB, averaged over frames."""
    r, e = _pair(ref, est)
    pr = np.abs(stft(Waveform(r, sample_rate), cfg).frames) ** 2
    pe = np.abs(stft(Waveform(e, sample_rate), cfg).frames) ** 2
    d = 10.0 * np.log10(pr + eps) - 10.0 * np.log10(pe + eps)
    return float(np.mean(np.sqrt(np.mean(d * d, axis=1))))


# ------------------------------------------------------------------ ESTOI

ESTOI_FS = 10000
ESTOI_FRAME = 256
ESTOI_NFFT = 512
ESTOI_BANDS = 15
ESTOI_MIN_FREQ = 150.0
ESTOI_SEGMENT = 30
ESTOI_DYN_RANGE = 40.0
_TINY = np.finfo(float).eps


def resample(x, from_rate, to_rate):
    """Polyphase rational resampling (Kaiser-windowed anti-aliasing FIR)."""
    if from_rate == to_rate:
        return np.asarray(x, dtype=np.float64)
    g = gcd(int(from_rate), int(to_rate))
    return scipy.signal.resample_poly(x, int(to_rate) // g, int(from_rate) // g)


@lru_cache(maxsize=None)
def third_octave_matrix(fs=ESTOI_FS, nfft=ESTOI_NFFT, n_bands=ESTOI_BANDS, min_freq=ESTOI_MIN_FREQ):
    """Band-membership matrix (n_bands x nfft/2+1) for one-third octave bands."""
    f = np.linspace(0, fs, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(n_bands, dtype=float)
    lo = min_freq * 2.0 ** ((2 * k - 1) / 6)
    hi = min_freq * 2.0 ** ((2 * k + 1) / 6)
    obm = np.zeros((n_bands, len(f)))
    for i in range(n_bands):
        a = int(np.argmin((f - lo[i]) ** 2))
        b = int(np.argmin((f - hi[i]) ** 2))
        obm[i, a:b] = 1.0
    obm.flags.writeable = False
    return obm


def _estoi_window():
    # symmetric Hann without its zero end points
    return np.hanning(ESTOI_FRAME + 2)[1:-1]


def _frames(x, hop):
    starts = np.arange(0, len(x) - ESTOI_FRAME, hop)
    if starts.size == 0:
        return np.zeros((0, ESTOI_FRAME))
    return x[starts[:, None] + np.arange(ESTOI_FRAME)[None, :]] * _estoi_window()


def _drop_silent_frames(x, y):
    hop = ESTOI_FRAME // 2
    fx, fy = _frames(x, hop), _frames(y, hop)
    if fx.shape[0] == 0:
        raise ValueError("signal too short for ESTOI")
    energy = 20.0 * np.log10(np.linalg.norm(fx, axis=1) + _TINY)
    keep = energy > energy.max() - ESTOI_DYN_RANGE
    return kernels.overlap_add(fx[keep], hop), kernels.overlap_add(fy[keep], hop)


def _band_envelopes(x):
    spec = kernels.rfft(_frames(x, ESTOI_FRAME // 2), ESTOI_NFFT)
    return np.sqrt(third_octave_matrix() @ (np.abs(spec) ** 2).T)


def _normalize(v, axis):
    v = v - v.mean(axis=axis, keepdims=True)
    n = np.sqrt(np.sum(v * v, axis=axis, keepdims=True))
    return v / np.maximum(n, _TINY)


def estoi(ref, est, sample_rate=16000):
    """Extended short-time objective intelligibility, clamped to [0, 1]."""
    r, e = _pair(ref, est)
    r = resample(r, sample_rate, ESTOI_FS)
    e = resample(e, sample_rate, ESTOI_FS)
    r, e = _drop_silent_frames(r, e)
    xr, xe = _band_envelopes(r), _band_envelopes(e)
    n_frames = xr.shape[1]
    if n_frames < ESTOI_SEGMENT:
        raise ValueError(f"ESTOI needs {ESTOI_SEGMENT} non-silent frames, got {n_frames}")
    idx = np.arange(n_frames - ESTOI_SEGMENT + 1)[:, None] + np.arange(ESTOI_SEGMENT)[None, :]
    sr = xr[:, idx].transpose(1, 0, 2)  # (segments, bands, frames)
    se = xe[:, idx].transpose(1, 0, 2)
    nr = _normalize(_normalize(sr, -1), -2)
    ne = _normalize(_normalize(se, -1), -2)
    d = np.sum(nr * ne, axis=(1, 2)) / ESTOI_SEGMENT
    return float(np.clip(d.mean(), 0.0, 1.0))


# -------------------------------------------------------------------- MCD

MCD_CONST = 10.0 / np.log(10.0) * np.sqrt(2.0)
MCD_CONFIG = StftConfig(512, 512, 256, "hann", True)


def mel_cepstra(w, n_mels=40, n_coeff=13, sample_rate=16000, cfg=MCD_CONFIG):
    """Mel-cepstra c_1..c_n (c_0 dropped) from natural-log mel amplitudes."""
    x = w if isinstance(w, Waveform) else Waveform(w, sample_rate)
    bank = melbank(x.sample_rate, cfg.n_fft, n_mels)
    log_amp = 0.5 * np.log(10.0) * log_mel(stft(x, cfg), bank)
    cep = scipy.fft.dct(log_amp, type=2, norm="ortho", axis=1)
    return cep[:, 1: n_coeff + 1]


def mcd_from_cepstra(c_ref, c_est):
    c_ref, c_est = np.asarray(c_ref), np.asarray(c_est)
    if c_ref.shape != c_est.shape:
        raise ValueError("cepstra shapes differ")
    return float(MCD_CONST * np.mean(np.linalg.norm(c_ref - c_est, axis=1)))


def mcd(ref, est, n_mels=40, n_coeff=13, sample_rate=16000):
    """Frame-aligned mel-cepstral distortion (no time warping)."""
    r, e = _pair(ref, est)
    return mcd_from_cepstra(mel_cepstra(r, n_mels, n_coeff, sample_rate),
                            mel_cepstra(e, n_mels, n_coeff, sample_rate))


# ------------------------------------------------------------------- text

def _encode(a, b):
    table = {}
    ca = np.array([table.setdefault(s, len(table)) for s in a], dtype=np.int64)
    cb = np.array([table.setdefault(s, len(table)) for s in b], dtype=np.int64)
    return ca, cb


def edit_distance(ref_seq, hyp_seq):
    """Levenshtein distance with unit costs over arbitrary hashable symbols."""
    return kernels.levenshtein(*_encode(list(ref_seq), list(hyp_seq)))


def cer(ref_text, hyp_text):
    if len(ref_text) == 0:
        raise ValueError("empty reference")
    return edit_distance(ref_text, hyp_text) / len(ref_text)


def phoneme_similarity(ref_seq, hyp_seq):
    if len(ref_seq) == 0:
        raise ValueError("empty reference")
    d = edit_distance(ref_seq, hyp_seq)
    return max(0.0, 1.0 - d / max(len(ref_seq), len(hyp_seq)))


# ------------------------------------------------------------ speaker toy

SPEAKER_CONFIG = StftConfig(512, 512, 256, "hann", True)


def speaker_embedding(w, n_mels=32, sample_rate=16000):
    x = w if isinstance(w, Waveform) else Waveform(w, sample_rate)
    if not np.any(x.samples):
        raise ValueError("zero-energy signal has no speaker embedding")
    lm = log_mel(stft(x, SPEAKER_CONFIG), melbank(x.sample_rate, SPEAKER_CONFIG.n_fft, n_mels))
    emb = np.concatenate([lm.mean(axis=0), lm.std(axis=0)])
    return emb / np.linalg.norm(emb)


def speaker_similarity_toy(ref, est, n_mels=32, sample_rate=16000):
    """Cosine similarity of log-mel mean/std embeddings (sign-blind)."""
    r, e = _pair(ref, est)
    if len(r) < 0.5 * sample_rate:
        raise ValueError("speaker similarity needs at least 0.5 s")
    v = float(speaker_embedding(r, n_mels, sample_rate) @ speaker_embedding(e, n_mels, sample_rate))
    return float(np.clip(v, -1.0, 1.0))
