"""Proxy-guided fine-tuning of the enhancer and the reward-hacking monitor.

Both loops start from a copy of the initial enhancer, keep the proxy frozen
and log held-out losses, proxy scores and (when references exist) oracle
metrics every ``eval_every`` steps into a trajectory. The monitor compares
the standardized improvement of the proxy composite with that of the oracle
composite; without references it watches how far the held-out outputs have
moved from the initial model's (L_reg) instead.
"""
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .datagen import oracle_values
from .enhancer import enhance
from .losses import (LogMagRef, LossWeights, MultiResConfig, loss_real, loss_reg, loss_simu,
                     loss_spec, metric_weight)
from .optim import Adam, step_lr

# re-exported objectives
from .losses import loss_feat, loss_score  # noqa: F401

MONITOR_ORACLES = ("LSD", "SDR", "CER", "ESTOI", "PhonemeSimilarity", "SpeakerSimilarity", "MCD")


class HackAbort(RuntimeError):
    """Raised (or reported) when the monitor flags reward hacking."""


def composite(scores, registry, weights=None, names=None):
    """Weighted mean of direction-signed, scale-standardized scores; higher is better."""
    num = den = 0.0
    for spec in registry:
        if spec.name not in scores or (names is not None and spec.name not in names):
            continue
        w = spec.weight if weights is None else metric_weight(weights, spec)
        if w == 0:
            continue
        num += w * (-spec.alpha) * scores[spec.name] / spec.scale
        den += w
    if den == 0:
        raise ValueError("no weighted metric available for the composite")
    return num / den


@dataclass
class HackMonitorState:
    tau: float = 0.5
    window: int = 5
    reg_unit: float = 4.0  # L_reg growth that counts as one standardized unit
    samples: deque = None  # (step, proxy composite, oracle composite or None, L_reg or None)
    divergences: deque = None
    start: tuple = None
    flag: bool = False
    raised_at: int = None

    def __post_init__(self):
        if self.window < 1 or self.tau <= 0 or self.reg_unit <= 0:
            raise ValueError("monitor window, tau and reg unit must be positive")
        self.samples = deque(maxlen=self.window) if self.samples is None else self.samples
        self.divergences = deque(maxlen=self.window) if self.divergences is None else self.divergences

    @property
    def last_divergence(self):
        return self.divergences[-1] if self.divergences else 0.0


def hack_monitor(state, step, proxy_composite, oracle_composite=None, l_reg=None):
    """Record one sample and latch the flag once a full window exceeds ``tau``.

    With an oracle composite the divergence is proxy improvement minus oracle
    improvement since the first sample. Without one it is the growth of
    ``l_reg`` since the first sample, in ``reg_unit``s.
    """
    sample = (step, proxy_composite, oracle_composite, l_reg)
    if state.start is None:
        state.start = sample
    s0 = state.start
    if oracle_composite is not None and s0[2] is not None:
        div = (proxy_composite - s0[1]) - (oracle_composite - s0[2])
    elif l_reg is not None and s0[3] is not None:
        div = (l_reg - s0[3]) / state.reg_unit
    else:
        div = 0.0
    state.samples.append(sample)
    state.divergences.append(float(div))
    if (not state.flag and len(state.divergences) == state.window
            and all(d > state.tau for d in state.divergences)):
        state.flag = True
        state.raised_at = step
    return state


@dataclass
class FinetuneConfig:
    steps: int = 300
    batch_size: int = 4
    lr: float = 1e-3
    seed: int = 0
    eval_every: int = 20
    resolutions: tuple = MultiResConfig().resolutions
    tau: float = 0.5
    window: int = 5
    reg_unit: float = 4.0
    abort_on_hack: bool = True
    sdr_filter_len: int = 512
    oracle_metrics: tuple = MONITOR_ORACLES


@dataclass
class FinetuneResult:
    model: object
    trajectory: list
    monitor: HackMonitorState
    aborted: bool = False
    message: str = ""
    checkpoints: list = field(default_factory=list)  # (step, model copy)


def _mean_dict(dicts):
    keys = dicts[0].keys()
    return {k: float(np.mean([d[k] for d in dicts])) for k in keys}


class _Evaluator:
    """Held-out statistics of the current model."""

    def __init__(self, model0, proxy, val_pairs, cfg, mres, with_refs):
        self.proxy = proxy
        self.pairs = list(val_pairs)
        self.cfg = cfg
        self.mres = mres
        self.with_refs = with_refs
        self.init_refs = [LogMagRef(enhance(model0, p.noisy).enhanced.samples, mres) for p in self.pairs]
        self.clean_refs = [LogMagRef(p.clean.samples, mres) for p in self.pairs] if with_refs else None

    def __call__(self, model):
        row, proxy_s, oracle_s = {}, [], []
        reg, spec = [], []
        for i, p in enumerate(self.pairs):
            y = enhance(model, p.noisy).enhanced
            tape = ad.Tape()
            yt = tape.const(y.samples)
            reg.append(float(loss_reg(yt, self.init_refs[i]).value))
            proxy_s.append(dict(self.proxy.predict(y).scores.values))
            if self.with_refs:
                spec.append(float(loss_spec(yt, self.clean_refs[i]).value))
                oracle_s.append(oracle_values(p.clean, y, p.transcript, self.cfg.sdr_filter_len,
                                              self.cfg.oracle_metrics))
        row["val_reg"] = float(np.mean(reg))
        if spec:
            row["val_spec"] = float(np.mean(spec))
        proxy_mean = _mean_dict(proxy_s)
        oracle_mean = _mean_dict(oracle_s) if oracle_s else {}
        row.update({f"proxy_{k}": v for k, v in proxy_mean.items()})
        row.update({f"oracle_{k}": v for k, v in oracle_mean.items()})
        return row, proxy_mean, oracle_mean


def _run(model0, proxy, train_pairs, val_pairs, weights, cfg, simulated, registry):
    if not isinstance(weights, LossWeights):
        raise TypeError("weights must be a LossWeights")
    if not train_pairs:
        raise ValueError("no training data")
    registry = registry or proxy.registry
    mres = MultiResConfig(cfg.resolutions)
    model = model0.copy()
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, lr=cfg.lr)
    monitor = HackMonitorState(cfg.tau, cfg.window, cfg.reg_unit)
    with_refs = simulated or all(getattr(p, "clean", None) is not None for p in val_pairs)
    evaluator = _Evaluator(model0, proxy, val_pairs, cfg, mres, with_refs) if val_pairs else None
    # composites compare the metrics both the proxy and the oracles provide
    shared = [m for m in proxy.metrics if m in cfg.oracle_metrics]
    proxy_names = shared if with_refs else list(proxy.metrics)

    if simulated:
        spec_refs = [LogMagRef(p.clean.samples, mres) for p in train_pairs]
        h_refs = [proxy.predict(p.clean).hidden for p in train_pairs] if weights.lambda_feat else None
    else:
        init_refs = [LogMagRef(enhance(model0, p.noisy).enhanced.samples, mres) for p in train_pairs]

    trajectory, recent, result = [], [], FinetuneResult(model, [], monitor)

    def evaluate(step):
        row = {"step": step, "lr": step_lr(max(step - 1, 0), cfg.lr, cfg.steps)}
        if recent:
            row.update(_mean_dict(recent))
            recent.clear()
        if evaluator is None:
            trajectory.append(row)
            return
        stats, proxy_mean, oracle_mean = evaluator(model)
        row.update(stats)
        pc = composite(proxy_mean, registry, weights, proxy_names)
        oc = composite(oracle_mean, registry, weights, shared) if (simulated and oracle_mean) else None
        hack_monitor(monitor, step, pc, oc, None if simulated else stats["val_reg"])
        row.update({"proxy_composite": pc, "divergence": monitor.last_divergence, "hack_flag": int(monitor.flag)})
        if oracle_mean:
            row["oracle_composite"] = composite(oracle_mean, registry, weights, shared)
        trajectory.append(row)

    evaluate(0)
    for step in range(cfg.steps):
        batch = rng.choice(len(train_pairs), size=min(cfg.batch_size, len(train_pairs)), replace=False)
        tape = ad.Tape()
        leaves = model.leaves(tape)
        total, terms_acc = None, {}
        for i in batch:
            y = enhance(model, train_pairs[i].noisy, tape, leaves).node
            if simulated:
                loss, terms = loss_simu(y, train_pairs[i].clean.samples, proxy, weights, registry, mres, True,
                                        spec_ref=spec_refs[i], h_ref=None if h_refs is None else h_refs[i])
            else:
                loss, terms = loss_real(y, init_refs[i], proxy, weights, registry, mres, True)
            total = loss if total is None else total + loss
            for k, v in terms.items():
                terms_acc[k] = terms_acc.get(k, 0.0) + float(np.asarray(getattr(v, "value", v))) / len(batch)
        loss = total * (1.0 / len(batch))
        if not np.isfinite(loss.value):
            raise FloatingPointError(f"fine-tuning loss became {float(loss.value)} at step {step}; terms {terms_acc}")
        grads = tape.backward(loss)
        opt.step({k: grads.of(v) for k, v in leaves.items()}, lr=step_lr(step, cfg.lr, cfg.steps))
        recent.append({"train_loss": float(loss.value), **{f"train_{k}": v for k, v in terms_acc.items()}})
        done = step + 1
        if done % cfg.eval_every == 0 or done == cfg.steps:
            evaluate(done)
            result.checkpoints.append((done, model.copy()))
            if monitor.flag and cfg.abort_on_hack:
                result.aborted = True
                result.message = (f"hack monitor raised at step {monitor.raised_at}: divergence "
                                  f"{monitor.last_divergence:.3f} > tau {monitor.tau} over {monitor.window} samples")
                break
    result.trajectory = trajectory
    return result


def finetune_simulated(model0, proxy, train_pairs, weights, cfg=None, val_pairs=(), registry=None):
    """Minimize the paired objective; pairs carry ``noisy``, ``clean`` and ``transcript``."""
    return _run(model0, proxy, train_pairs, val_pairs, weights, cfg or FinetuneConfig(), True, registry)


def finetune_real(model0, proxy, train_items, weights, cfg=None, val_items=(), registry=None):
    """Minimize the reference-free objective.

    Only ``noisy`` is read from training items. References in ``val_items``
    (if any) feed the logged oracle metrics but never the loss or the monitor.
    """
    return _run(model0, proxy, train_items, val_items, weights, cfg or FinetuneConfig(), False, registry)


def trajectory_columns(trajectory):
    cols = []
    for row in trajectory:
        for k in row:
            if k not in cols:
                cols.append(k)
    return cols


def write_trajectory(path, trajectory):
    import csv

    cols = trajectory_columns(trajectory)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in trajectory:
            w.writerow(["" if row.get(c) is None else (repr(row[c]) if isinstance(row[c], float) else row[c])
                        for c in cols])

