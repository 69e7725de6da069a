"""Reference-free quality proxy: waveform -> metric scores and hidden vector.

Log-mel frames (plus a per-utterance mean-normalized copy) go through a
per-frame tanh MLP, are mean-pooled over time into the hidden vector ``h``
and mapped by one affine row per metric, followed by the metric's range
activation. Every step exists both on the autodiff tape (for supervision of
the enhancer) and as plain numpy (for fast inference and training).
"""
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .metrics.ranking import pearson, spearman
from .metrics.registry import MetricRegistry, MetricVector, default_registry
from .optim import Adam, warmup_lr
from .signal import StftConfig, Waveform, log_mel, melbank, stft

DESK_METRICS = ("LSD", "SDR", "CER", "ESTOI", "PhonemeSimilarity", "SpeakerSimilarity", "MCD", "RankingScore")
MIN_SECONDS = 0.2
LOG_FLOOR = 1e-10
_LN10 = math.log(10.0)


@dataclass(frozen=True)
class SqaConfig:
    n_mels: int = 40
    widths: tuple = (256,)
    hidden_dim: int = 64
    metrics: tuple = DESK_METRICS
    sample_rate: int = 16000
    n_fft: int = 512
    hop: int = 256
    cmn: bool = True  # append utterance-mean-normalized log-mel
    deltas: bool = True  # append centered frame differences of the log-mel
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "metrics", tuple(self.metrics))
        if self.hidden_dim < 8:
            raise ValueError("hidden_dim must be at least 8")
        if not self.metrics:
            raise ValueError("at least one predicted metric is required")
        if len(set(self.metrics)) != len(self.metrics):
            raise ValueError("duplicate predicted metrics")

    @property
    def n_features(self):
        return self.n_mels * (1 + int(self.cmn) + int(self.deltas))

    @property
    def stft_config(self):
        return StftConfig(self.n_fft, self.n_fft, self.hop, "hann", True)

    def to_json(self):
        d = asdict(self)
        d["widths"] = list(self.widths)
        d["metrics"] = list(self.metrics)
        return d

    @classmethod
    def from_json(cls, d):
        return cls(**d)


def apply_range_activation(spec, z):
    """Map a head's pre-activation into the metric's range (float or Tensor)."""
    taped = isinstance(z, ad.Tensor)
    if spec.activation == "identity":
        out = z
    elif spec.activation == "relu":
        out = ad.relu(z) if taped else np.maximum(z, 0.0)
    elif spec.activation == "tanh_unit":
        out = ad.tanh(z) if taped else np.tanh(z)
    else:
        sig = ad.sigmoid(z) if taped else 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))
        out = spec.lo + (spec.hi - spec.lo) * sig
    # saturated sigmoids round onto the bound; keep open ends open
    if spec.lo_open:
        lo = np.nextafter(spec.lo, spec.hi)
        out = ad.maximum(out, lo) if taped else np.maximum(out, lo)
    if spec.hi_open:
        hi = np.nextafter(spec.hi, spec.lo)
        out = -ad.maximum(-out, -hi) if taped else np.minimum(out, hi)
    if not taped and np.ndim(out) == 0:
        return float(out)
    return out


def _inverse_activation(spec, v):
    if spec.activation in ("identity", "relu"):
        return v
    if spec.activation == "tanh_unit":
        return math.atanh(min(max(v, -0.999), 0.999))
    p = min(max((v - spec.lo) / (spec.hi - spec.lo), 1e-3), 1 - 1e-3)
    return math.log(p / (1 - p))


class SqaModel:
    def __init__(self, config=None, registry=None, params=None, buffers=None):
        self.config = config or SqaConfig()
        self.registry = registry or default_registry()
        unknown = [m for m in self.config.metrics if m not in self.registry]
        if unknown:
            raise ValueError(f"predicted metrics not in registry: {unknown}")
        # heads follow registry order
        self.metrics = [n for n in self.registry.names if n in self.config.metrics]
        self.specs = [self.registry[n] for n in self.metrics]
        self.bank = melbank(self.config.sample_rate, self.config.n_fft, self.config.n_mels)
        self.params = params if params is not None else self._init_params()
        self.buffers = buffers if buffers is not None else {
            "feat_mean": np.zeros(self.config.n_features),
            "feat_std": np.ones(self.config.n_features),
            "label_mean": np.zeros(len(self.metrics)),
            "label_std": np.ones(len(self.metrics)),
        }
        for k, v in self.params.items():
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite parameter {k}")

    @property
    def n_layers(self):
        return len(self.config.widths) + 1

    def _init_params(self):
        rng = np.random.default_rng(self.config.seed)
        dims = [self.config.n_features, *self.config.widths, self.config.hidden_dim]
        p = {}
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            p[f"enc{i}.W"] = rng.standard_normal((a, b)) / np.sqrt(a)
            p[f"enc{i}.b"] = np.zeros(b)
        p["head.W"] = rng.standard_normal((dims[-1], len(self.metrics))) * 0.1 / np.sqrt(dims[-1])
        p["head.b"] = np.zeros(len(self.metrics))
        return p

    def encoder_keys(self):
        return [k for k in self.params if k.startswith("enc")]

    def copy(self):
        return SqaModel(self.config, self.registry, {k: v.copy() for k, v in self.params.items()},
                        {k: v.copy() for k, v in self.buffers.items()})

    def state(self):
        return {**self.params, **{"buffer." + k: v for k, v in self.buffers.items()}}

    def save(self, path):
        checkpoint.save(path, "sqa", self.config.to_json(), self.state(), self.registry.digest(),
                        {"registry": self.registry.to_json()})

    @classmethod
    def load(cls, path):
        header, state = checkpoint.load(path, "sqa")
        registry = MetricRegistry.from_json(header["extra"]["registry"])
        if registry.digest() != header["registry_digest"]:
            raise checkpoint.CheckpointError(f"{path}: registry digest mismatch")
        params = {k: v for k, v in state.items() if not k.startswith("buffer.")}
        buffers = {k[7:]: v for k, v in state.items() if k.startswith("buffer.")}
        return cls(SqaConfig.from_json(header["config"]), registry, params, buffers)

    # ------------------------------------------------------------- numpy

    def features(self, w):
        """Unstandardized frame features (T, n_features) of a waveform."""
        self._check_input(w.samples.shape[0], w.sample_rate)
        lm = log_mel(stft(w, self.config.stft_config), self.bank, LOG_FLOOR)
        parts = [lm]
        if self.config.cmn:
            parts.append(lm - lm.mean(axis=0))
        if self.config.deltas:
            nxt, prv = _delta_index(lm.shape[0])
            parts.append(0.5 * (lm[nxt] - lm[prv]))
        return np.concatenate(parts, axis=1) if len(parts) > 1 else lm

    def _check_input(self, n, sample_rate):
        if sample_rate != self.config.sample_rate:
            raise ValueError(f"proxy expects {self.config.sample_rate} Hz, got {sample_rate}")
        if n < MIN_SECONDS * sample_rate:
            raise ValueError(f"input shorter than {MIN_SECONDS} s")

    def forward_features(self, feats):
        """Numpy forward on features (T, F) or (B, T, F): returns (pre, scores, h)."""
        p = self.params
        z = (np.asarray(feats) - self.buffers["feat_mean"]) / self.buffers["feat_std"]
        for i in range(self.n_layers):
            z = np.tanh(z @ p[f"enc{i}.W"] + p[f"enc{i}.b"])
        h = z.mean(axis=-2)
        pre = h @ p["head.W"] + p["head.b"]
        post = np.stack([apply_range_activation(s, pre[..., k]) for k, s in enumerate(self.specs)], axis=-1)
        return pre, post, h

    def predict(self, w):
        _, post, h = self.forward_features(self.features(w))
        return SqaOutput(MetricVector(self.registry, dict(zip(self.metrics, post))), h)

    # -------------------------------------------------------------- tape

    def leaves(self, tape, trainable=False, keys=None):
        """Parameters as tape leaves; ``keys`` limits which ones are trainable."""
        out = {}
        for k, v in self.params.items():
            train = trainable and (keys is None or k in keys)
            out[k] = tape.param(v, trainable=train)
        return out

    def taped_features(self, x):
        cfg = self.config.stft_config
        re, im = ad.frame_window_dft(x, cfg)
        power = re * re + im * im
        mel = ad.matmul(power, self.bank.weights.T)
        lm = ad.log(ad.maximum(mel, LOG_FLOOR)) * (1.0 / _LN10)
        parts = [lm]
        if self.config.cmn:
            parts.append(lm - ad.mean(lm, axis=0))
        if self.config.deltas:
            nxt, prv = _delta_index(lm.shape[0])
            parts.append((ad.getitem(lm, nxt) - ad.getitem(lm, prv)) * 0.5)
        return ad.concat(parts, axis=1) if len(parts) > 1 else lm

    def taped_forward(self, leaves, feats):
        """Tape forward on a features tensor (T, F) or (B, T, F): (pre, h)."""
        shape = feats.shape
        z = (feats - self.buffers["feat_mean"]) * (1.0 / self.buffers["feat_std"])
        if len(shape) == 3:
            z = ad.reshape(z, (shape[0] * shape[1], shape[2]))
        for i in range(self.n_layers):
            z = ad.tanh(ad.matmul(z, leaves[f"enc{i}.W"]) + leaves[f"enc{i}.b"])
        if len(shape) == 3:
            h = ad.mean(ad.reshape(z, (shape[0], shape[1], z.shape[-1])), axis=1)
        else:
            h = ad.mean(z, axis=0)
        pre = ad.matmul(h, leaves["head.W"]) + leaves["head.b"]
        return pre, h


def _delta_index(t):
    i = np.arange(t)
    return np.minimum(i + 1, t - 1), np.maximum(i - 1, 0)


@dataclass
class SqaOutput:
    scores: MetricVector
    hidden: np.ndarray
    score_nodes: dict = field(default=None, repr=False)
    hidden_node: object = field(default=None, repr=False)


def sqa_forward(model, w, tape=None, leaves=None):
    """Scores and hidden vector for ``w`` (a Waveform or a 1-D tape tensor).

    With a tensor input (or an explicit ``tape``) the computation is recorded;
    proxy parameters enter as frozen leaves unless ``leaves`` is supplied.
    """
    if isinstance(w, ad.Tensor):
        x, tape = w, w.tape
        model._check_input(w.shape[0], model.config.sample_rate)
    elif tape is not None:
        model._check_input(w.samples.shape[0], w.sample_rate)
        x = tape.const(w.samples)
    else:
        return model.predict(w)
    if leaves is None:
        leaves = model.leaves(tape, trainable=False)
    pre, h = model.taped_forward(leaves, model.taped_features(x))
    nodes = {n: apply_range_activation(s, ad.getitem(pre, k)) for k, (n, s) in enumerate(zip(model.metrics, model.specs))}
    vec = MetricVector(model.registry, {n: float(t.value) for n, t in nodes.items()})
    return SqaOutput(vec, h.value.copy(), nodes, h)


# ---------------------------------------------------------------- training

@dataclass
class SqaTrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 3e-3
    weight_decay: float = 1e-4
    warmup_steps: int = 500
    seed: int = 0
    freeze_encoder: bool = False


@dataclass
class SqaReport:
    history: list  # mean training loss per epoch
    val_lcc: dict
    val_srcc: dict
    steps: int = 0


def _label_matrix(model, vectors):
    y = np.full((len(vectors), len(model.metrics)), np.nan)
    for i, v in enumerate(vectors):
        for k, n in enumerate(model.metrics):
            if n in v:
                y[i, k] = v[n]
    return y


def _fit_stats(model, feats, labels):
    flat = np.concatenate([f.reshape(-1, f.shape[-1]) for f in feats])
    model.buffers["feat_mean"] = flat.mean(axis=0)
    model.buffers["feat_std"] = np.maximum(flat.std(axis=0), 1e-3)
    mean = np.nanmean(labels, axis=0)
    std = np.nanstd(labels, axis=0)
    mean = np.where(np.isfinite(mean), mean, 0.0)
    std = np.where(np.isfinite(std) & (std > 1e-6), std, 1.0)
    model.buffers["label_mean"] = mean
    model.buffers["label_std"] = std
    for k, s in enumerate(model.specs):
        model.params["head.b"][k] = _inverse_activation(s, float(mean[k]))


def _batch_loss(model, leaves, feats, y):
    """Mean L1 between standardized predictions and labels, missing labels masked.

    Heads with identity or relu activation are fitted on their pre-activation
    (equal to the score wherever the label is attainable) so that a relu head
    cannot get stuck at zero gradient.
    """
    tape = feats.tape
    pre, _ = model.taped_forward(leaves, feats)
    cols = []
    for k, s in enumerate(model.specs):
        zk = ad.getitem(pre, (slice(None), k))
        cols.append(zk if s.activation in ("identity", "relu") else apply_range_activation(s, zk))
    pred = ad.stack(cols, axis=1)
    mask = np.isfinite(y)
    target = np.where(mask, y, 0.0)
    inv = 1.0 / model.buffers["label_std"]
    d = (pred - target) * inv
    loss = ad.sum_(ad.abs_(d) * mask.astype(np.float64)) * (1.0 / max(mask.sum(), 1))
    return loss


def train_sqa(model, train_items, val_items=(), cfg=None, features=None):
    """Fit the proxy to oracle labels; ``items`` are (Waveform, MetricVector) pairs.

    Returns the per-epoch loss history and per-metric held-out LCC/SRCC.
    """
    cfg = cfg or SqaTrainConfig()
    if not train_items:
        raise ValueError("empty training set")
    feats = features if features is not None else [model.features(w) for w, _ in train_items]
    labels = _label_matrix(model, [v for _, v in train_items])
    if np.all(np.isnan(labels)):
        raise ValueError("no labels for any predicted metric")
    _fit_stats(model, feats, labels)
    buckets = {}
    for i, f in enumerate(feats):
        buckets.setdefault(f.shape[0], []).append(i)
    rng = np.random.default_rng(cfg.seed)
    keys = [k for k in model.params if not (cfg.freeze_encoder and k.startswith("enc"))]
    opt = Adam({k: model.params[k] for k in keys}, lr=cfg.lr, weight_decay=cfg.weight_decay)
    n_batches = sum(math.ceil(len(b) / cfg.batch_size) for b in buckets.values())
    warmup = min(cfg.warmup_steps, max(1, (cfg.epochs * n_batches) // 10))
    history, step = [], 0
    for _ in range(cfg.epochs):
        batches = []
        for idx in buckets.values():
            order = rng.permutation(idx)
            batches += [order[j: j + cfg.batch_size] for j in range(0, len(order), cfg.batch_size)]
        total = 0.0
        for bi in rng.permutation(len(batches)):
            b = batches[bi]
            tape = ad.Tape()
            leaves = model.leaves(tape, trainable=True, keys=set(keys))
            loss = _batch_loss(model, leaves, tape.const(np.stack([feats[i] for i in b])), labels[b])
            if not np.isfinite(loss.value):
                raise FloatingPointError(f"SQA training loss became {float(loss.value)} at step {step}")
            grads = tape.backward(loss)
            step += 1
            opt.step({k: grads.of(leaves[k]) for k in keys}, lr=warmup_lr(step, cfg.lr, warmup))
            total += float(loss.value) * len(b)
        history.append(total / len(feats))
    lcc, srcc = evaluate_sqa(model, val_items) if val_items else ({}, {})
    return SqaReport(history, lcc, srcc, step)


def evaluate_sqa(model, items, features=None):
    """Per-metric LCC and SRCC between predictions and labels (NaN if undefined)."""
    feats = features if features is not None else [model.features(w) for w, _ in items]
    preds = np.array([model.forward_features(f)[1] for f in feats])
    labels = _label_matrix(model, [v for _, v in items])
    lcc, srcc = {}, {}
    for k, n in enumerate(model.metrics):
        ok = np.isfinite(labels[:, k])
        try:
            lcc[n] = pearson(preds[ok, k], labels[ok, k])
            srcc[n] = spearman(preds[ok, k], labels[ok, k])
        except ValueError:
            lcc[n] = srcc[n] = float("nan")
    return lcc, srcc
