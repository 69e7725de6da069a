"""STFT magnitude-masking enhancer.

Each frame's mask comes from an MLP over the standardized log-magnitudes of
that frame and its neighbours (replicate-padded at the edges); the mask
scales real and imaginary parts alike, so the noisy phase passes through.
"""
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .losses import LogMagRef, MultiResConfig, loss_spec
from .optim import Adam, step_lr
from .signal import StftConfig, Waveform, is_cola


@dataclass(frozen=True)
class SeConfig:
    n_fft: int = 512
    hop: int = 256
    context: int = 2
    hidden: tuple = (128,)
    sample_rate: int = 16000
    mask_bias: float = 0.0  # initial output bias; the mask starts near 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.context < 0:
            raise ValueError("context must be non-negative")
        StftConfig(self.n_fft, self.n_fft, self.hop, "hann", True)

    @property
    def stft_config(self):
        return StftConfig(self.n_fft, self.n_fft, self.hop, "hann", True)

    @property
    def n_bins(self):
        return self.n_fft // 2 + 1

    def to_json(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_json(cls, d):
        return cls(**d)


@dataclass(eq=False)
class EnhancedPair:
    enhanced: Waveform
    mask: np.ndarray  # (T, F)
    node: object = None  # tape tensor of the enhanced samples when taped
    mask_node: object = None


class SeModel:
    def __init__(self, config=None, params=None, buffers=None):
        self.config = config or SeConfig()
        if not is_cola(self.config.stft_config):
            raise ValueError("enhancer analysis config must be COLA")
        self.params = params if params is not None else self._init_params()
        f = self.config.n_bins
        self.buffers = buffers if buffers is not None else {"feat_mean": np.zeros(f), "feat_std": np.ones(f)}

    def _init_params(self):
        c = self.config
        rng = np.random.default_rng(c.seed)
        dims = [c.n_bins * (2 * c.context + 1), *c.hidden, c.n_bins]
        p = {}
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            last = i == len(dims) - 2
            p[f"l{i}.W"] = rng.standard_normal((a, b)) / np.sqrt(a) * (0.1 if last else 1.0)
            p[f"l{i}.b"] = np.full(b, c.mask_bias) if last else np.zeros(b)
        return p

    @property
    def n_params(self):
        return int(sum(v.size for v in self.params.values()))

    @property
    def n_layers(self):
        return len(self.config.hidden) + 1

    def copy(self):
        return SeModel(self.config, {k: v.copy() for k, v in self.params.items()},
                       {k: v.copy() for k, v in self.buffers.items()})

    def state(self):
        return {**self.params, **{"buffer." + k: v for k, v in self.buffers.items()}}

    def save(self, path, extra=None):
        checkpoint.save(path, "se", self.config.to_json(), self.state(), extra=extra)

    @classmethod
    def load(cls, path):
        header, state = checkpoint.load(path, "se")
        params = {k: v for k, v in state.items() if not k.startswith("buffer.")}
        buffers = {k[7:]: v for k, v in state.items() if k.startswith("buffer.")}
        return cls(SeConfig.from_json(header["config"]), params, buffers)

    # ----------------------------------------------------------- analysis

    def spectrum(self, samples):
        """(re, im) of the analysis STFT, identical to the taped values."""
        return ad.windowed_rfft(samples, self.config.stft_config)

    def log_magnitude(self, samples):
        re, im = self.spectrum(samples)
        return np.log(np.sqrt(re * re + im * im) + 1e-7)

    def context_features(self, logmag):
        """Standardized log-magnitudes of frames t-c..t+c, concatenated (T, F*(2c+1))."""
        z = (logmag - self.buffers["feat_mean"]) / self.buffers["feat_std"]
        c = self.config.context
        t = z.shape[0]
        idx = np.clip(np.arange(t)[:, None] + np.arange(-c, c + 1)[None, :], 0, t - 1)
        return z[idx].reshape(t, -1)

    def fit_input_stats(self, waves):
        lm = np.concatenate([self.log_magnitude(w.samples) for w in waves])
        self.buffers["feat_mean"] = lm.mean(axis=0)
        self.buffers["feat_std"] = np.maximum(lm.std(axis=0), 1e-3)

    # ------------------------------------------------------------ forward

    def mask_np(self, feats):
        z = feats
        for i in range(self.n_layers):
            z = z @ self.params[f"l{i}.W"] + self.params[f"l{i}.b"]
            z = np.tanh(z) if i < self.n_layers - 1 else 0.5 * (1.0 + np.tanh(0.5 * z))
        return z

    def mask_taped(self, leaves, feats):
        z = feats
        for i in range(self.n_layers):
            z = ad.matmul(z, leaves[f"l{i}.W"]) + leaves[f"l{i}.b"]
            z = ad.tanh(z) if i < self.n_layers - 1 else ad.sigmoid(z)
        return z

    def leaves(self, tape, trainable=True):
        return {k: tape.param(v, trainable=trainable) for k, v in self.params.items()}


def _check(model, x):
    if x.sample_rate != model.config.sample_rate:
        raise ValueError(f"enhancer expects {model.config.sample_rate} Hz, got {x.sample_rate}")
    if len(x.samples) < model.config.n_fft // 2 + 1:
        raise ValueError("input shorter than one analysis frame")


def enhance(model, x, tape=None, leaves=None):
    """Masked resynthesis of ``x``; recorded on ``tape`` when one is given."""
    _check(model, x)
    cfg = model.config.stft_config
    feats = model.context_features(model.log_magnitude(x.samples))
    if tape is None:
        re, im = model.spectrum(x.samples)
        mask = model.mask_np(feats)
        t = ad.Tape()
        y = ad.overlap_add_synthesis(t.const(mask * re), t.const(mask * im), cfg, len(x.samples)).value
        return EnhancedPair(x.with_samples(y), mask)
    if leaves is None:
        leaves = model.leaves(tape)
    re, im = ad.frame_window_dft(tape.const(x.samples), cfg)
    mask = model.mask_taped(leaves, tape.const(feats))
    mre, mim = ad.mask_apply(mask, re, im)
    y = ad.overlap_add_synthesis(mre, mim, cfg, len(x.samples))
    return EnhancedPair(x.with_samples(y.value.copy()), mask.value.copy(), y, mask)


def enhance_batch(model, waves):
    return [enhance(model, w).enhanced for w in waves]


@dataclass
class SeTrainConfig:
    steps: int = 2000
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    resolutions: tuple = MultiResConfig().resolutions


def pretrain_se(model, pairs, cfg=None, val_pairs=(), log_every=0):
    """Fit the mask network on the multi-resolution spectral loss alone.

    ``pairs`` are objects with ``noisy`` and ``clean`` waveforms. Returns the
    list of (step, mean batch loss) records.
    """
    cfg = cfg or SeTrainConfig()
    if not pairs:
        raise ValueError("no training pairs")
    mres = MultiResConfig(cfg.resolutions)
    model.fit_input_stats([p.noisy for p in pairs])
    refs = [LogMagRef(p.clean.samples, mres) for p in pairs]
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, lr=cfg.lr)
    history = []
    for step in range(cfg.steps):
        batch = rng.choice(len(pairs), size=min(cfg.batch_size, len(pairs)), replace=False)
        tape = ad.Tape()
        leaves = model.leaves(tape)
        total = None
        for i in batch:
            y = enhance(model, pairs[i].noisy, tape, leaves).node
            term = loss_spec(y, refs[i])
            total = term if total is None else total + term
        loss = total * (1.0 / len(batch))
        if not np.isfinite(loss.value):
            raise FloatingPointError(f"SE pretraining loss became {float(loss.value)} at step {step}")
        grads = tape.backward(loss)
        opt.step({k: grads.of(v) for k, v in leaves.items()}, lr=step_lr(step, cfg.lr, cfg.steps))
        history.append((step, float(loss.value)))
    return history


def spectral_loss(model, pairs, resolutions=None):
    """Mean held-out L_spec of the model's outputs (no gradients)."""
    mres = MultiResConfig(resolutions or MultiResConfig().resolutions)
    vals = []
    for p in pairs:
        tape = ad.Tape()
        y = enhance(model, p.noisy).enhanced.samples
        vals.append(float(loss_spec(tape.const(y), p.clean.samples, mres).value))
    return float(np.mean(vals))
