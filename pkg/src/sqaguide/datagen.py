"""WAV I/O, synthetic speech-like scenes, degradations and labeled corpora.

The synthetic "speech" is a harmonic source with a drifting f0, shaped by
vowel formant envelopes and gated into syllables and words. Because the
generator knows which vowel each syllable carries, it also emits a
transcript; :func:`recognize` is a threshold-and-template pseudo-recognizer
whose errors grow with degradation, standing in for an ASR system.
"""
import json
import os
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.signal

from .metrics import oracles
from .metrics.ranking import with_rank_scores
from .metrics.registry import MetricVector, default_registry
from .metrics.reports import write_metric_csv
from .signal import StftConfig, Waveform, melbank, stft


# ------------------------------------------------------------------ WAV I/O

class WavError(ValueError):
    pass


class WavHeaderError(WavError):
    pass


class WavCodecError(WavError):
    pass


class WavChannelError(WavError):
    pass


_PCM = 1
_FLOAT = 3
_EXTENSIBLE = 0xFFFE


def wav_write(path, w, bit_depth=16):
    """Write mono PCM16 (``bit_depth=16``) or IEEE float32 (``bit_depth=32``)."""
    x = w.samples
    if bit_depth == 16:
        data = np.round(np.clip(x, -1.0, 1.0 - 1.0 / 32768) * 32768).astype("<i2").tobytes()
        fmt_tag, block = _PCM, 2
    elif bit_depth == 32:
        data = x.astype("<f4").tobytes()
        fmt_tag, block = _FLOAT, 4
    else:
        raise WavCodecError(f"unsupported bit depth {bit_depth}")
    fmt = struct.pack("<HHIIHH", fmt_tag, 1, w.sample_rate, w.sample_rate * block, block, bit_depth)
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(data)) + b"WAVE")
        fh.write(b"fmt " + struct.pack("<I", len(fmt)) + fmt)
        fh.write(b"data" + struct.pack("<I", len(data)) + data)


def wav_read(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavHeaderError(f"{path}: not a RIFF/WAVE file")
    pos, fmt, data = 12, None, None
    while pos + 8 <= len(raw):
        cid, size = raw[pos:pos + 4], struct.unpack("<I", raw[pos + 4:pos + 8])[0]
        body = raw[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise WavHeaderError(f"{path}: chunk {cid!r} truncated")
        if cid == b"fmt ":
            if size < 16:
                raise WavHeaderError(f"{path}: fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", body[:16])
            if fmt[0] == _EXTENSIBLE:
                if size < 26:
                    raise WavHeaderError(f"{path}: extensible fmt chunk too short")
                fmt = (struct.unpack("<H", body[24:26])[0],) + fmt[1:]
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise WavHeaderError(f"{path}: missing fmt or data chunk")
    tag, channels, rate, _, _, bits = fmt
    if channels != 1:
        raise WavChannelError(f"{path}: {channels} channels, only mono is supported")
    if tag == _PCM and bits == 16:
        x = np.frombuffer(data[: len(data) // 2 * 2], dtype="<i2").astype(np.float64) / 32768.0
    elif tag == _FLOAT and bits == 32:
        x = np.frombuffer(data[: len(data) // 4 * 4], dtype="<f4").astype(np.float64)
    else:
        raise WavCodecError(f"{path}: unsupported codec tag={tag} bits={bits}")
    return Waveform(x, rate)


# ------------------------------------------------------------ synthesis

VOWELS = {
    "a": (730.0, 1090.0, 2440.0),
    "e": (530.0, 1840.0, 2480.0),
    "i": (270.0, 2290.0, 3010.0),
    "o": (570.0, 840.0, 2410.0),
    "u": (300.0, 870.0, 2240.0),
}
VOWEL_ORDER = tuple(VOWELS)
FLOOR_DB = -45.0
_BANDWIDTHS = np.array([90.0, 110.0, 170.0])
_FORMANT_GAINS = np.array([1.0, 0.6, 0.25])


@dataclass(frozen=True)
class Transcript:
    text: str  # vowels, words separated by spaces
    phonemes: tuple
    events: tuple = field(default=(), compare=False)  # (start_s, end_s, vowel, word)


def formant_envelope(freqs, formants):
    f = np.asarray(freqs)[..., None]
    res = _FORMANT_GAINS * _BANDWIDTHS ** 2 / ((f - np.asarray(formants)) ** 2 + _BANDWIDTHS ** 2)
    return res.sum(axis=-1) + 0.01


MIN_VOICED = 0.4  # seconds; shorter draws leave too few frames for intelligibility scoring


def _schedule(rng, duration):
    for _ in range(20):
        events = _draw_schedule(rng, duration)
        if sum(e - s for s, e, _, _ in events) >= min(MIN_VOICED, 0.5 * duration):
            break
    return events


def _draw_schedule(rng, duration):
    events = []
    t = rng.uniform(0.03, 0.06)
    word = 0
    while True:
        placed = 0
        for _ in range(int(rng.integers(1, 4))):
            dur = rng.uniform(0.1, 0.16)
            if t + dur > duration - 0.02:
                break
            events.append((t, t + dur, VOWEL_ORDER[int(rng.integers(len(VOWEL_ORDER)))], word))
            t += dur + rng.uniform(0.025, 0.04)
            placed += 1
        if placed == 0:
            break
        word += 1
        t += rng.uniform(0.1, 0.16)
    return events


def synth_utterance(seed, duration=1.0, sample_rate=16000):
    """Speech-like waveform plus the transcript of its syllables."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    f0_base = rng.uniform(90.0, 230.0)
    tract = rng.uniform(0.95, 1.05)
    drift = 0.12 * np.sin(2 * np.pi * rng.uniform(0.5, 1.5) * t + rng.uniform(0, 2 * np.pi))
    f0 = np.clip(f0_base * 2.0 ** (drift - 0.1 * t), 80.0, 300.0)
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    fmax = min(5000.0, 0.45 * sample_rate)
    k = np.arange(1, int(fmax // 80) + 1)[:, None]
    events = _schedule(rng, duration)
    out = np.zeros(n)
    ramp = int(0.025 * sample_rate)
    for start, end, vowel, _ in events:
        a, b = int(start * sample_rate), min(int(end * sample_rate), n)
        m = b - a
        if m <= 2 * ramp:
            continue
        # harmonic amplitudes follow the syllable's mean f0; the phase keeps the drift
        fk = k[:, 0] * f0[a:b].mean()
        amp = formant_envelope(fk, np.array(VOWELS[vowel]) / tract) / k[:, 0] ** 0.6 * (fk < fmax)
        seg = amp @ np.sin(k * phase[a:b])
        env = np.ones(m)
        r = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        env[:ramp] = r
        env[-ramp:] = r[::-1]
        out[a:b] += seg * env
    active = out != 0
    if np.any(active):
        out *= 0.1 / np.sqrt(np.mean(out[active] ** 2))
    # faint pink room tone so that pauses are not digital silence
    tone = make_noise("pink", n, sample_rate, rng)
    out += tone * (0.1 * 10 ** (FLOOR_DB / 20) / np.sqrt(np.mean(tone ** 2)))
    words = {}
    for _, _, v, wd in events:
        words.setdefault(wd, []).append(v)
    text = " ".join("".join(words[w]) for w in sorted(words))
    tr = Transcript(text, tuple(v for _, _, v, _ in events), tuple(events))
    return Waveform(out, sample_rate), tr


def synth_clean(seed, duration=1.0, sample_rate=16000):
    return synth_utterance(seed, duration, sample_rate)[0]


# ------------------------------------------------------------ recognizer

REC_CONFIG = StftConfig(256, 256, 80, "hann", True)
_REC_ACTIVE_DB = 30.0
_REC_MIN_FRAMES = 6
_REC_WORD_GAP_S = 0.07


def _rec_bank(sample_rate):
    return melbank(sample_rate, REC_CONFIG.n_fft, 20, 150.0, min(3800.0, sample_rate / 2))


def _templates(sample_rate):
    bank = _rec_bank(sample_rate)
    bins = np.arange(REC_CONFIG.n_bins) * sample_rate / REC_CONFIG.n_fft
    rows = []
    for v in VOWEL_ORDER:
        # same spectral tilt as the harmonic source
        env = (formant_envelope(bins, np.array(VOWELS[v])) * np.maximum(bins, 80.0) ** -0.6) ** 2
        rows.append(np.log(bank.weights @ env + 1e-12))
    t = np.array(rows)
    t -= t.mean(axis=1, keepdims=True)
    return t / np.linalg.norm(t, axis=1, keepdims=True)


def recognize(w):
    """Pseudo-recognizer: energy-gated syllables classified by formant template."""
    spec = stft(w, REC_CONFIG)
    power = np.abs(spec.frames) ** 2
    freqs = np.arange(REC_CONFIG.n_bins) * w.sample_rate / REC_CONFIG.n_fft
    band = (freqs >= 150) & (freqs <= 3800)
    e = 10 * np.log10(power[:, band].sum(axis=1) + 1e-12)
    floor = np.percentile(e, 10)
    active = e > max(e.max() - _REC_ACTIVE_DB, 0.5 * (e.max() + floor))
    padded = np.concatenate([[False], active, [False]]).astype(np.int8)
    starts = np.flatnonzero(np.diff(padded) == 1)
    ends = np.flatnonzero(np.diff(padded) == -1)
    segs = [(s, t) for s, t in zip(starts, ends) if t - s >= _REC_MIN_FRAMES]
    bank = _rec_bank(w.sample_rate)
    templ = _templates(w.sample_rate)
    hop_s = REC_CONFIG.hop / w.sample_rate
    text, phones, prev_end = [], [], None
    for s, t in segs:
        q = (t - s) // 5
        feat = np.log(bank.weights @ power[s + q: t - q].mean(axis=0) + 1e-12)
        feat -= feat.mean()
        feat /= max(np.linalg.norm(feat), 1e-12)
        v = VOWEL_ORDER[int(np.argmax(templ @ feat))]
        if prev_end is not None and (s - prev_end) * hop_s > _REC_WORD_GAP_S:
            text.append(" ")
        text.append(v)
        phones.append(v)
        prev_end = t
    return Transcript("".join(text), tuple(phones))


# --------------------------------------------------------- mixing, degrade

@dataclass(eq=False)
class Scene:
    clean: Waveform
    noise: Waveform
    snr_db: float
    mixture: Waveform
    degradations: list = field(default_factory=list)


def _energy(x):
    return float(np.sum(np.asarray(x, dtype=np.float64) ** 2))


def mix_at_snr(clean, noise, snr_db):
    """Scale ``noise`` so the clean-to-noise energy ratio equals ``snr_db``."""
    c, nz = clean.samples, noise.samples
    if c.shape != nz.shape:
        raise ValueError("clean and noise lengths differ")
    ec, en = _energy(c), _energy(nz)
    if ec == 0 or en == 0:
        raise ValueError("clean and noise must both be non-silent")
    if np.isinf(snr_db) and snr_db > 0:
        scaled = np.zeros_like(nz)
    else:
        scaled = nz * np.sqrt(ec / (en * 10.0 ** (snr_db / 10.0)))
    return Scene(clean, noise.with_samples(scaled), float(snr_db), clean.with_samples(c + scaled), ["noise"])


NOISE_KINDS = ("white", "pink", "brown", "babble", "hum")


def make_noise(kind, n, sample_rate, rng):
    if kind == "white":
        return rng.standard_normal(n)
    if kind in ("pink", "brown"):
        spec = np.fft.rfft(rng.standard_normal(n))
        f = np.maximum(np.fft.rfftfreq(n, 1.0 / sample_rate), 20.0)
        spec /= np.sqrt(f) if kind == "pink" else f
        return np.fft.irfft(spec, n)
    if kind == "babble":
        seeds = rng.integers(0, 2 ** 31, size=4)
        x = sum(synth_clean(int(s), n / sample_rate, sample_rate).samples[:n] for s in seeds)
        return x + 0.05 * np.std(x) * rng.standard_normal(n)
    if kind == "hum":
        t = np.arange(n) / sample_rate
        base = rng.choice([50.0, 60.0])
        x = sum(np.sin(2 * np.pi * base * h * t + rng.uniform(0, 6.3)) / h for h in range(1, 12))
        return x + 0.1 * rng.standard_normal(n)
    raise ValueError(f"unknown noise kind {kind!r}")


@dataclass(frozen=True)
class Recipe:
    snr_db: float = None
    noise: str = "white"
    rt60: float = None
    cutoff_hz: float = None
    gain: float = None
    clip: float = None
    seed: int = 0

    def validate(self, sample_rate):
        if self.noise not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.noise!r}")
        if self.rt60 is not None and not 0 < self.rt60 <= 3.0:
            raise ValueError("rt60 must be in (0, 3] seconds")
        if self.cutoff_hz is not None and not 0 < self.cutoff_hz < sample_rate / 2:
            raise ValueError("cutoff must lie below Nyquist")
        if self.gain is not None and not self.gain > 0:
            raise ValueError("gain must be positive")
        if self.clip is not None and not self.clip > 0:
            raise ValueError("clip level must be positive")
        if self.snr_db is not None and np.isnan(self.snr_db):
            raise ValueError("snr must be a number")

    def tags(self):
        return [name for name, v in (("reverb", self.rt60), ("noise", self.snr_db), ("bandlimit", self.cutoff_hz),
                                     ("gain", self.gain), ("clip", self.clip)) if v is not None]


def synthetic_rir(rt60, sample_rate, rng):
    n = max(int(rt60 * sample_rate), 2)
    t = np.arange(n) / sample_rate
    h = rng.standard_normal(n) * np.exp(-6.9078 * t / rt60) * 0.3
    h[0] = 1.0
    return h


def degrade(w, recipe):
    """Apply reverb, noise, band limit, gain and clipping, in that order."""
    recipe.validate(w.sample_rate)
    rng = np.random.default_rng(recipe.seed)
    x = w.samples.copy()
    n, sr = len(x), w.sample_rate
    if recipe.rt60 is not None:
        rms = np.sqrt(np.mean(x ** 2))
        x = scipy.signal.fftconvolve(x, synthetic_rir(recipe.rt60, sr, rng))[:n]
        new_rms = np.sqrt(np.mean(x ** 2))
        if new_rms > 0:
            x *= rms / new_rms
    if recipe.snr_db is not None:
        noise = w.with_samples(make_noise(recipe.noise, n, sr, rng))
        x = mix_at_snr(w.with_samples(x), noise, recipe.snr_db).mixture.samples
    if recipe.cutoff_hz is not None:
        sos = scipy.signal.butter(8, recipe.cutoff_hz, fs=sr, output="sos")
        x = scipy.signal.sosfilt(sos, x)
    if recipe.gain is not None:
        x = x * recipe.gain
    if recipe.clip is not None:
        x = np.clip(x, -recipe.clip, recipe.clip)
    return w.with_samples(x)


def random_variant_recipe(rng, peak):
    """A random degradation emulating one enhanced version of a source."""
    return Recipe(
        snr_db=float(rng.uniform(-5.0, 30.0)),
        noise=str(rng.choice(NOISE_KINDS)),
        rt60=float(rng.uniform(0.2, 0.8)) if rng.random() < 0.3 else None,
        cutoff_hz=float(rng.uniform(2000.0, 7000.0)) if rng.random() < 0.3 else None,
        gain=float(rng.uniform(0.5, 2.0)) if rng.random() < 0.5 else None,
        clip=float(rng.uniform(0.3, 0.9) * peak) if rng.random() < 0.2 else None,
        seed=int(rng.integers(2 ** 31)),
    )


# ----------------------------------------------------------------- labels

ORACLE_METRICS = ("LSD", "SDR", "CER", "ESTOI", "PhonemeSimilarity", "SpeakerSimilarity", "MCD")


def oracle_values(clean, est, transcript, sdr_filter_len=512, metrics=ORACLE_METRICS):
    """Deterministic oracle metrics of ``est`` against ``clean``."""
    sr = clean.sample_rate
    out = {}
    if "SDR" in metrics:
        out["SDR"] = oracles.sdr(clean, est, sdr_filter_len)
    if "LSD" in metrics:
        out["LSD"] = oracles.lsd(clean, est, sample_rate=sr)
    if "ESTOI" in metrics:
        out["ESTOI"] = oracles.estoi(clean, est, sr)
    if "MCD" in metrics:
        out["MCD"] = oracles.mcd(clean, est, sample_rate=sr)
    if "SpeakerSimilarity" in metrics:
        out["SpeakerSimilarity"] = oracles.speaker_similarity_toy(clean, est, sample_rate=sr) \
            if np.any(est.samples) else -1.0
    if transcript is not None and ({"CER", "PhonemeSimilarity"} & set(metrics)):
        hyp = recognize(est)
        if "CER" in metrics:
            out["CER"] = oracles.cer(transcript.text, hyp.text)
        if "PhonemeSimilarity" in metrics:
            out["PhonemeSimilarity"] = oracles.phoneme_similarity(transcript.phonemes, hyp.phonemes)
    return out


# ---------------------------------------------------------------- corpora

def _subseeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def split_sources(source_ids, seed, fractions=(0.8, 0.1, 0.1)):
    """Deterministic train/val/test assignment; every source lands in one split."""
    ids = sorted(source_ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(round(fractions[0] * len(ids)))
    n_val = int(round(fractions[1] * len(ids)))
    if len(ids) >= 3:
        n_train = min(max(n_train, 1), len(ids) - 2)
        n_val = max(n_val, 1)
    out = {}
    for rank, i in enumerate(order):
        out[ids[i]] = "train" if rank < n_train else ("val" if rank < n_train + n_val else "test")
    return out


def quantize_f32(w):
    return w.with_samples(w.samples.astype(np.float32).astype(np.float64))


def _source(sub_seed, variants, duration, sample_rate, sdr_filter_len):
    rng = np.random.default_rng(sub_seed)
    clean, tr = synth_utterance(int(rng.integers(2 ** 31)), duration, sample_rate)
    clean = quantize_f32(clean)
    mix_recipe = Recipe(snr_db=float(rng.uniform(-5.0, 15.0)), noise=str(rng.choice(NOISE_KINDS)),
                        seed=int(rng.integers(2 ** 31)))
    mixture = quantize_f32(degrade(clean, mix_recipe))
    peak = float(np.max(np.abs(clean.samples)))
    out = []
    for _ in range(variants):
        rec = random_variant_recipe(rng, peak)
        v = quantize_f32(degrade(clean, rec))
        out.append((rec, v, oracle_values(clean, v, tr, sdr_filter_len)))
    return clean, tr, mix_recipe, mixture, out


@dataclass(eq=False)
class Corpus:
    records: list  # manifest dicts, without paths
    waves: dict  # utt id -> Waveform
    labels: dict  # variant utt id -> MetricVector (with RankingScore)
    transcripts: dict  # source id -> Transcript

    def items(self, split=None):
        """(Waveform, MetricVector) pairs of the labeled variants, optionally one split."""
        return [(self.waves[r["utt_id"]], self.labels[r["utt_id"]]) for r in self.records
                if r["role"] == "variant" and (split is None or r["split"] == split)]


def generate_corpus(n_sources, variants_per_source, seed, duration=1.0, sample_rate=16000,
                    sdr_filter_len=512, registry=None, workers=1):
    """In-memory corpus: per source one clean, one mixture and labeled variants."""
    registry = registry or default_registry()
    seeds = _subseeds(seed, n_sources)
    args = [(s, variants_per_source, duration, sample_rate, sdr_filter_len) for s in seeds]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            sources = list(pool.map(_source, *zip(*args)))
    else:
        sources = [_source(*a) for a in args]
    src_ids = [f"src{i:04d}" for i in range(n_sources)]
    splits = split_sources(src_ids, seed)
    records, waves, vectors, source_of, transcripts = [], {}, {}, {}, {}
    for sid, (clean, tr, mix_recipe, mixture, vars_) in zip(src_ids, sources):
        transcripts[sid] = tr
        base = {"source_id": sid, "split": splits[sid], "text": tr.text, "phonemes": list(tr.phonemes)}
        items = [(f"{sid}_clean", "clean", clean, None), (f"{sid}_mix", "mixture", mixture, mix_recipe)]
        items += [(f"{sid}_v{j}", "variant", v, rec) for j, (rec, v, _) in enumerate(vars_)]
        for utt, role, wav, rec in items:
            waves[utt] = wav
            records.append({"utt_id": utt, **base, "role": role,
                            "recipe": None if rec is None else asdict(rec)})
        for j, (_, _, vals) in enumerate(vars_):
            vectors[f"{sid}_v{j}"] = MetricVector(registry, vals)
            source_of[f"{sid}_v{j}"] = sid
    if vectors:
        vectors = with_rank_scores(vectors, source_of, registry)
    return Corpus(records, waves, vectors, transcripts)


LABEL_COLUMNS = (*ORACLE_METRICS, "RankingScore")


def build_dataset(out_dir, n_sources, variants_per_source, seed, duration=1.0, sample_rate=16000,
                  sdr_filter_len=512, registry=None, workers=1):
    """Write a labeled corpus; returns the manifest records.

    Layout: ``audio/*.wav`` (float32), ``manifest.jsonl`` (one record per
    utterance) and ``labels.csv`` (one row per degraded variant).
    """
    registry = registry or default_registry()
    corpus = generate_corpus(n_sources, variants_per_source, seed, duration, sample_rate,
                             sdr_filter_len, registry, workers)
    os.makedirs(os.path.join(out_dir, "audio"), exist_ok=True)
    records = []
    for r in corpus.records:
        rel = os.path.join("audio", r["utt_id"] + ".wav")
        wav_write(os.path.join(out_dir, rel), corpus.waves[r["utt_id"]], bit_depth=32)
        records.append({**r, "path": rel})
    write_manifest(os.path.join(out_dir, "manifest.jsonl"), records)
    split_of = {r["utt_id"]: (r["source_id"], r["split"]) for r in records}
    rows = [(u, v, split_of[u]) for u, v in corpus.labels.items()]
    write_metric_csv(os.path.join(out_dir, "labels.csv"), rows, registry,
                     names=LABEL_COLUMNS, extra=("source_id", "split"))
    return records


def write_manifest(path, records):
    ids = [r["utt_id"] for r in records]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate utterance ids in manifest")
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def read_manifest(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def transcript_of(record):
    return Transcript(record["text"], tuple(record["phonemes"]))


# ------------------------------------------------------- in-memory pairs

@dataclass(eq=False)
class Pair:
    noisy: Waveform
    clean: Waveform
    transcript: Transcript


def simulate_pairs(n, seed, duration=1.0, sample_rate=16000, snr_range=(-5.0, 10.0), reverb_prob=0.0,
                   noise_kinds=NOISE_KINDS):
    """Noisy/clean pairs for SE training (``reverb_prob`` adds room tails)."""
    out = []
    for s in _subseeds(seed, n):
        rng = np.random.default_rng(s)
        clean, tr = synth_utterance(int(rng.integers(2 ** 31)), duration, sample_rate)
        rec = Recipe(snr_db=float(rng.uniform(*snr_range)), noise=str(rng.choice(noise_kinds)),
                     rt60=float(rng.uniform(0.2, 0.6)) if rng.random() < reverb_prob else None,
                     seed=int(rng.integers(2 ** 31)))
        out.append(Pair(degrade(clean, rec), clean, tr))
    return out
