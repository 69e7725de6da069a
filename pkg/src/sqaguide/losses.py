"""Tape objectives for enhancer training.

``loss_spec``/``loss_reg`` are multi-resolution log-magnitude L1 distances,
``loss_score`` is the direction-signed weighted sum of proxy scores and
``loss_feat`` the L1 distance between proxy hidden vectors. ``loss_simu``
and ``loss_real`` combine them for paired and reference-free data.
"""
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .signal import StftConfig, is_cola

MAG_EPS = 1e-12  # inside the square root
LOG_EPS = 1e-7  # added to magnitudes before the log


@dataclass(frozen=True)
class MultiResConfig:
    resolutions: tuple = ((512, 128), (1024, 256), (256, 64))

    def __post_init__(self):
        res = tuple((int(w), int(h)) for w, h in self.resolutions)
        object.__setattr__(self, "resolutions", res)
        if not res:
            raise ValueError("at least one STFT resolution is required")
        for c in self.configs():
            if not is_cola(c):
                raise ValueError(f"resolution ({c.win_length}, {c.hop}) is not COLA with a hann window")

    def configs(self):
        return [StftConfig(w, w, h, "hann", True) for w, h in self.resolutions]


@dataclass(frozen=True)
class LossWeights:
    lambda_spec: float = 1.0
    lambda_score: float = 0.0
    lambda_feat: float = 0.0
    lambda_reg: float = 0.0
    metric_weights: dict = field(default_factory=dict)  # overrides of registry w_k
    standardize: bool = True  # divide scores by the registry scale constants

    def __post_init__(self):
        lams = (self.lambda_spec, self.lambda_score, self.lambda_feat, self.lambda_reg)
        if any(v < 0 or not np.isfinite(v) for v in lams):
            raise ValueError("loss weights must be finite and non-negative")
        if not any(v > 0 for v in lams):
            raise ValueError("at least one loss weight must be positive")
        if any(v < 0 for v in self.metric_weights.values()):
            raise ValueError("metric weights must be non-negative")

    def scaled(self, c):
        return LossWeights(c * self.lambda_spec, c * self.lambda_score, c * self.lambda_feat,
                           c * self.lambda_reg, dict(self.metric_weights), self.standardize)


def log_magnitude_np(x, cfg):
    """Same numbers as the taped path: ln(sqrt(re^2 + im^2 + eps) + eps')."""
    re, im = ad.windowed_rfft(x, cfg)
    return np.log(np.sqrt(re * re + im * im + MAG_EPS) + LOG_EPS)


class LogMagRef:
    """Precomputed reference log-magnitudes for every resolution of a config."""

    def __init__(self, samples, cfg=None):
        self.cfg = cfg or MultiResConfig()
        self.n = len(samples)
        self.logmags = [log_magnitude_np(samples, c) for c in self.cfg.configs()]


def _log_magnitude(x, cfg):
    re, im = ad.frame_window_dft(x, cfg)
    return ad.log(ad.complex_magnitude(re, im, MAG_EPS) + LOG_EPS)


def multires_l1(x, ref, cfg=None):
    """Sum over resolutions of the mean |log-magnitude difference|.

    ``x`` is a tape tensor; ``ref`` is a tensor, a sample array (constant) or
    a :class:`LogMagRef`.
    """
    if isinstance(ref, LogMagRef):
        if cfg is not None and cfg != ref.cfg:
            raise ValueError("reference was computed for other resolutions")
        cfg, n_ref = ref.cfg, ref.n
    else:
        cfg = cfg or MultiResConfig()
        n_ref = (ref.shape if isinstance(ref, ad.Tensor) else np.shape(ref))[0]
    if x.shape != (n_ref,):
        raise ValueError("signals must have equal lengths")
    total = None
    for i, c in enumerate(cfg.configs()):
        a = _log_magnitude(x, c)
        if isinstance(ref, LogMagRef):
            b = ref.logmags[i]
        elif isinstance(ref, ad.Tensor):
            b = _log_magnitude(ref, c)
        else:
            b = log_magnitude_np(ref, c)
        term = ad.l1_distance(a, b, reduce="mean")
        total = term if total is None else total + term
    return total


def loss_spec(x_enh, x_clean, cfg=None):
    return multires_l1(x_enh, x_clean, cfg)


def loss_reg(x_enh, x_init, cfg=None):
    return multires_l1(x_enh, x_init, cfg)


def metric_weight(weights, spec):
    return float(weights.metric_weights.get(spec.name, spec.weight))


def loss_score(scores, registry, weights, names=None):
    """Sum_k w_k * alpha_k * s_k (each s_k divided by its scale when standardizing).

    ``scores`` maps metric names to tape scalars or floats. The sum runs over
    ``names`` (default: the scored metrics plus any metric given an explicit
    positive weight); a positively weighted metric without a score is an error.
    """
    if names is None:
        names = set(scores) | {k for k, v in weights.metric_weights.items() if v > 0}
    total = 0.0
    for spec in registry:
        w = metric_weight(weights, spec)
        if spec.name not in names or w == 0:
            continue
        if spec.name not in scores:
            raise KeyError(f"missing score for weighted metric {spec.name}")
        c = w * spec.alpha / (spec.scale if weights.standardize else 1.0)
        total = total + c * scores[spec.name]
    return total


def loss_feat(h_enh, h_ref):
    if h_enh.shape != np.shape(h_ref.value if isinstance(h_ref, ad.Tensor) else h_ref):
        raise ValueError("hidden vectors differ in dimension")
    return ad.l1_distance(h_enh, h_ref, reduce="sum")


def _zero(x):
    return x.tape.const(0.0)


def loss_simu(x_enh, x_clean, proxy, weights, registry=None, cfg=None, return_terms=False,
              spec_ref=None, h_ref=None):
    """lambda_spec * L_spec + lambda_score * L_score + lambda_feat * L_feat.

    ``spec_ref`` (a :class:`LogMagRef` of the clean signal) and ``h_ref``
    (the proxy's hidden vector for the clean signal) may be precomputed;
    both are constants because the proxy is frozen.
    """
    from .sqa import sqa_forward

    registry = registry or proxy.registry
    terms = {}
    total = _zero(x_enh)
    if weights.lambda_spec:
        terms["spec"] = loss_spec(x_enh, spec_ref if spec_ref is not None else x_clean, cfg)
        total = total + weights.lambda_spec * terms["spec"]
    if weights.lambda_score or weights.lambda_feat:
        out = sqa_forward(proxy, x_enh)
        if weights.lambda_score:
            terms["score"] = loss_score(out.score_nodes, registry, weights, proxy.metrics)
            total = total + weights.lambda_score * terms["score"]
        if weights.lambda_feat:
            if h_ref is None:
                ref = x_clean if isinstance(x_clean, ad.Tensor) else x_enh.tape.const(x_clean)
                h_ref = sqa_forward(proxy, ref).hidden_node
            terms["feat"] = loss_feat(out.hidden_node, h_ref)
            total = total + weights.lambda_feat * terms["feat"]
    return (total, terms) if return_terms else total


def loss_real(x_enh, x_init, proxy, weights, registry=None, cfg=None, return_terms=False):
    """lambda_score * L_score + lambda_reg * L_reg (no clean reference).

    ``x_init`` is the initial model's output for the same input, as samples
    or a :class:`LogMagRef`.
    """
    from .sqa import sqa_forward

    registry = registry or proxy.registry
    terms = {}
    total = _zero(x_enh)
    if weights.lambda_score:
        out = sqa_forward(proxy, x_enh)
        terms["score"] = loss_score(out.score_nodes, registry, weights, proxy.metrics)
        total = total + weights.lambda_score * terms["score"]
    if weights.lambda_reg:
        terms["reg"] = loss_reg(x_enh, x_init, cfg)
        total = total + weights.lambda_reg * terms["reg"]
    return (total, terms) if return_terms else total
