"""Reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Tape` records every operation as a node holding its value, its
parent node ids and a vector-Jacobian product closure. Nodes are appended in
evaluation order, so parents always precede children and a single reverse
sweep computes the gradient of a scalar root.

Conventions: ``abs`` and ``relu`` have zero derivative at 0. Leaves created
with ``trainable=False`` and constants never receive gradients, but gradients
still flow through the operations that consume them.
"""
from functools import lru_cache

import numpy as np

from . import kernels
from .signal import analysis_window, frame_indices, ola_envelope, is_cola


class Tape:
    def __init__(self):
        self._values = []
        self._parents = []
        self._vjps = []
        self._requires = []
        self._kinds = []
        self._trainable = []
        self._swept = set()

    def __len__(self):
        return len(self._values)

    def _record(self, kind, value, parents=(), vjp=None, requires=None):
        value = np.asarray(value, dtype=np.float64)
        if requires is None:
            requires = any(self._requires[p] for p in parents)
        self._values.append(value)
        self._parents.append(tuple(parents))
        self._vjps.append(vjp if requires else None)
        self._requires.append(bool(requires))
        self._kinds.append(kind)
        return Tensor(self, len(self._values) - 1)

    def param(self, value, trainable=True):
        """A leaf; ``trainable=False`` marks a frozen leaf (no gradient returned)."""
        t = self._record("leaf", np.array(value, dtype=np.float64), requires=trainable)
        if trainable:
            self._trainable.append(t.id)
        return t

    def const(self, value):
        return self._record("const", np.asarray(value, dtype=np.float64), requires=False)

    def kind(self, t):
        return self._kinds[t.id]

    def backward(self, root):
        """Gradients of scalar ``root`` with respect to every trainable leaf."""
        if not isinstance(root, Tensor) or root.tape is not self:
            raise ValueError("backward root is not a node of this tape")
        if root.value.size != 1:
            raise ValueError(f"backward root must be scalar, got shape {root.shape}")
        if root.id in self._swept:
            raise RuntimeError("backward already ran for this root; record a new forward pass")
        self._swept.add(root.id)
        grads = {root.id: np.ones_like(self._values[root.id])}
        for i in range(root.id, -1, -1):
            g = grads.pop(i, None) if self._kinds[i] != "leaf" else grads.get(i)
            if g is None or self._vjps[i] is None:
                continue
            pg = self._vjps[i](g)
            for p, gp in zip(self._parents[i], pg):
                if gp is None or not self._requires[p]:
                    continue
                if p in grads:
                    grads[p] = grads[p] + gp
                else:
                    grads[p] = gp
        out = Gradients()
        for leaf in self._trainable:
            if leaf <= root.id and leaf in grads:
                out[leaf] = np.asarray(grads[leaf], dtype=np.float64).reshape(self._values[leaf].shape)
        return out


class Gradients(dict):
    """Leaf id -> gradient array. Missing entries mean zero gradient."""

    def of(self, t):
        g = self.get(t.id)
        return np.zeros_like(t.value) if g is None else g


class Tensor:
    __slots__ = ("tape", "id")
    __array_priority__ = 100

    def __init__(self, tape, node_id):
        self.tape = tape
        self.id = node_id

    @property
    def value(self):
        return self.tape._values[self.id]

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Tensor(id={self.id}, shape={self.shape}, kind={self.tape.kind(self)})"

    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Tensor):
            return x.tape
    raise TypeError("at least one operand must be a Tensor")


def _lift(tape, x):
    if isinstance(x, Tensor):
        if x.tape is not tape:
            raise ValueError("operands live on different tapes")
        return x
    return tape.const(x)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def detach(x):
    """Constant copy of ``x``; nothing upstream receives gradient through it."""
    return x.tape.const(x.value.copy())


# ---------------------------------------------------------------- arithmetic

def add(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    sa, sb = a.shape, b.shape
    return tape._record("add", a.value + b.value, (a.id, b.id),
                        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    sa, sb = a.shape, b.shape
    return tape._record("sub", a.value - b.value, (a.id, b.id),
                        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    va, vb = a.value, b.value
    return tape._record("mul", va * vb, (a.id, b.id),
                        lambda g: (_unbroadcast(g * vb, va.shape), _unbroadcast(g * va, vb.shape)))


def div(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    va, vb = a.value, b.value
    if np.any(vb == 0):
        raise ZeroDivisionError("division by zero in autodiff div")
    out = va / vb
    return tape._record("div", out, (a.id, b.id),
                        lambda g: (_unbroadcast(g / vb, va.shape),
                                   _unbroadcast(-g * out / vb, vb.shape)))


def matmul(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    va, vb = a.value, b.value

    def vjp(g):
        if va.ndim == 1 and vb.ndim == 1:
            return g * vb, g * va
        if va.ndim == 1:
            return g @ vb.T, np.outer(va, g)
        if vb.ndim == 1:
            return np.outer(g, vb), va.T @ g
        return g @ vb.T, va.T @ g

    return tape._record("matmul", va @ vb, (a.id, b.id), vjp)


# ------------------------------------------------------------- elementwise

def relu(x):
    v = x.value
    return x.tape._record("relu", np.maximum(v, 0.0), (x.id,), lambda g: (g * (v > 0),))


def sigmoid(x):
    s = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    return x.tape._record("sigmoid", s, (x.id,), lambda g: (g * s * (1.0 - s),))


def tanh(x):
    t = np.tanh(x.value)
    return x.tape._record("tanh", t, (x.id,), lambda g: (g * (1.0 - t * t),))


def exp(x):
    e = np.exp(x.value)
    return x.tape._record("exp", e, (x.id,), lambda g: (g * e,))


def log(x):
    v = x.value
    if np.any(v <= 0):
        raise ValueError("log of a non-positive value")
    return x.tape._record("log", np.log(v), (x.id,), lambda g: (g / v,))


def sqrt(x):
    v = x.value
    if np.any(v < 0):
        raise ValueError("sqrt of a negative value")
    r = np.sqrt(v)
    return x.tape._record("sqrt", r, (x.id,), lambda g: (g * 0.5 / r,))


def abs_(x):
    v = x.value
    return x.tape._record("abs", np.abs(v), (x.id,), lambda g: (g * np.sign(v),))


def maximum(x, floor):
    """Elementwise ``max(x, floor)`` against a constant floor."""
    v = x.value
    return x.tape._record("maximum", np.maximum(v, floor), (x.id,), lambda g: (g * (v > floor),))


# --------------------------------------------------------------- reductions

def sum_(x, axis=None):
    shape = x.shape

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return x.tape._record("sum", np.sum(x.value, axis=axis), (x.id,), vjp)


def mean(x, axis=None):
    n = x.value.size if axis is None else x.shape[axis]
    return mul(sum_(x, axis), 1.0 / n)


def l1_distance(a, b, reduce="sum"):
    """Sum (or mean) of ``|a - b|``."""
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    if a.shape != b.shape:
        raise ValueError(f"l1_distance shape mismatch {a.shape} vs {b.shape}")
    d = a.value - b.value
    scale = 1.0 / d.size if reduce == "mean" else 1.0
    sgn = np.sign(d)
    return tape._record("l1", np.abs(d).sum() * scale, (a.id, b.id),
                        lambda g: (g * scale * sgn, -g * scale * sgn))


# ----------------------------------------------------------------- shaping

def reshape(x, shape):
    orig = x.shape
    return x.tape._record("reshape", x.value.reshape(shape), (x.id,), lambda g: (g.reshape(orig),))


def _is_basic(key):
    parts = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (int, np.integer, slice)) or k is Ellipsis for k in parts)


def getitem(x, key):
    shape = x.shape
    basic = _is_basic(key)

    def vjp(g):
        z = np.zeros(shape)
        if basic:
            z[key] = g  # basic indexing never repeats an element
        else:
            np.add.at(z, key, g)
        return (z,)

    return x.tape._record("getitem", x.value[key], (x.id,), vjp)


def take_rows(x, idx):
    """Gather rows ``x[idx]`` along axis 0 (indices may repeat)."""
    idx = np.asarray(idx)
    shape = x.shape

    def vjp(g):
        z = np.zeros(shape)
        np.add.at(z, idx, g)
        return (z,)

    return x.tape._record("take_rows", x.value[idx], (x.id,), vjp)


def concat(xs, axis=0):
    tape = _tape_of(*xs)
    xs = [_lift(tape, x) for x in xs]
    sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return tape._record("concat", np.concatenate([x.value for x in xs], axis=axis),
                        tuple(x.id for x in xs),
                        lambda g: tuple(np.split(g, sizes, axis=axis)))


def stack(xs, axis=0):
    tape = _tape_of(*xs)
    xs = [_lift(tape, x) for x in xs]
    n = len(xs)
    return tape._record("stack", np.stack([x.value for x in xs], axis=axis),
                        tuple(x.id for x in xs),
                        lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


# --------------------------------------------------------- spectral blocks

def complex_magnitude(re, im, eps=1e-12):
    """``sqrt(re^2 + im^2 + eps)``; eps keeps the derivative finite at 0."""
    tape = _tape_of(re, im)
    re, im = _lift(tape, re), _lift(tape, im)
    vr, vi = re.value, im.value
    mag = np.sqrt(vr * vr + vi * vi + eps)
    return tape._record("cmag", mag, (re.id, im.id), lambda g: (g * vr / mag, g * vi / mag))


@lru_cache(maxsize=16)
def _dft_mats(cfg):
    n = cfg.n_fft
    k = np.arange(cfg.n_bins)
    ang = 2.0 * np.pi * np.outer(np.arange(n), k) / n
    w = analysis_window(cfg)[:, None]
    fwd_re = w * np.cos(ang)
    fwd_im = -w * np.sin(ang)
    # inverse real DFT: x[n] = (1/N) sum_k c_k (Re X_k cos - Im X_k sin)
    c = np.full(cfg.n_bins, 2.0)
    c[0] = 1.0
    c[-1] = 1.0
    inv_re = (c[:, None] * np.cos(ang.T)) / n
    inv_im = -(c[:, None] * np.sin(ang.T)) / n
    for m in (fwd_re, fwd_im, inv_re, inv_im):
        m.flags.writeable = False
    return fwd_re, fwd_im, inv_re, inv_im


def windowed_rfft(samples, cfg):
    """(re, im) of the framed, windowed signal; the values the tape STFT records."""
    idx = frame_indices(len(samples), cfg)
    spec = kernels.rfft(np.asarray(samples, dtype=np.float64)[idx] * analysis_window(cfg), cfg.n_fft)
    return spec.real.copy(), spec.imag.copy()


def _rfft_adjoint(g_re, g_im, n):
    """Adjoint of the one-sided real DFT: sum_k g_re cos(.) - g_im sin(.)."""
    h = (g_re + 1j * g_im) * 0.5
    h[:, 0] *= 2.0
    h[:, -1] *= 2.0
    return n * kernels.irfft(h, n)


def _irfft_weights(cfg):
    c = np.full(cfg.n_bins, 2.0 / cfg.n_fft)
    c[0] = c[-1] = 1.0 / cfg.n_fft
    return c


def frame_window_dft(x, cfg):
    """Differentiable STFT of a 1-D tensor; returns ``(re, im)`` of shape (T, F).

    Same linear map as the dense matrices of ``_dft_mats`` evaluated with the
    FFT kernels; the adjoint scatters windowed frame gradients back by bincount.
    """
    n = x.shape[0]
    idx = frame_indices(n, cfg)
    win = analysis_window(cfg)
    re, im = windowed_rfft(x.value, cfg)

    def vjp(g):
        gf = _rfft_adjoint(g[0], g[1], cfg.n_fft) * win
        return (np.bincount(idx.ravel(), weights=gf.ravel(), minlength=n),)

    both = x.tape._record("stft", np.stack([re, im]), (x.id,), vjp)
    return both[0], both[1]


def overlap_add_synthesis(re, im, cfg, length):
    """Differentiable inverse of :func:`frame_window_dft` (window-normalized OLA)."""
    if not is_cola(cfg):
        raise ValueError(f"{cfg.window} window with hop {cfg.hop} is not COLA")
    tape = _tape_of(re, im)
    re, im = _lift(tape, re), _lift(tape, im)
    t = re.shape[0]
    env = ola_envelope(cfg, t)
    inv_env = np.where(env > 1e-10, 1.0 / np.maximum(env, 1e-10), 0.0)
    start = cfg.n_fft // 2 if cfg.center_pad else 0
    pos = np.arange(t)[:, None] * cfg.hop + np.arange(cfg.n_fft)[None, :]
    total = len(env)
    frames = kernels.irfft(re.value + 1j * im.value, cfg.n_fft)
    full = np.bincount(pos.ravel(), weights=frames.ravel(), minlength=total) * inv_env
    out = np.zeros(length)
    m = min(length, total - start)
    out[:m] = full[start: start + m]
    c = _irfft_weights(cfg)

    def vjp(g):
        gfull = np.zeros(total)
        gfull[start: start + m] = g[:m]
        spec = kernels.rfft((gfull * inv_env)[pos], cfg.n_fft)
        return spec.real * c, spec.imag * c

    return tape._record("istft", out, (re.id, im.id), vjp)


def mask_apply(mask, re, im):
    """Real-valued T-F mask applied to both parts of a spectrum."""
    return mul(mask, re), mul(mask, im)


# ------------------------------------------------------------ grad checking

def grad_check(f, point, delta=1e-5, max_coords=64, rng=None, return_details=False):
    """Max relative error between backward() and central differences.

    ``f(tape, *leaves)`` must return a scalar tensor; ``point`` is an array or
    a list of arrays. When the point has more than ``max_coords`` entries a
    random subset is checked, always including the largest analytic entries.
    Per-coordinate error is ``|a - n| / max(|a|, |n|, 1e-4 * max|a|)`` so
    coordinates with negligible gradient are judged on the gradient's scale.
    """
    single = isinstance(point, np.ndarray)
    pts = [np.array(point, dtype=np.float64)] if single else [np.array(p, dtype=np.float64) for p in point]
    tape = Tape()
    leaves = [tape.param(p) for p in pts]
    root = f(tape, *leaves)
    grads = tape.backward(root)
    analytic = np.concatenate([grads.of(lf).ravel() for lf in leaves])
    sizes = [p.size for p in pts]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    if total <= max_coords:
        coords = np.arange(total)
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        top = np.argsort(-np.abs(analytic))[: max(1, max_coords // 8)]
        rest = rng.choice(total, size=max_coords - len(top), replace=False)
        coords = np.unique(np.concatenate([top, rest]))

    def value_at(flat_idx, step):
        which = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        local = flat_idx - offsets[which]
        shifted = [p.copy() for p in pts]
        shifted[which].flat[local] += step
        t = Tape()
        return float(f(t, *[t.param(p) for p in shifted]).value)

    numeric = np.array([(value_at(c, delta) - value_at(c, -delta)) / (2 * delta) for c in coords])
    a = analytic[coords]
    floor = max(1e-4 * float(np.max(np.abs(analytic))), 1e-300)
    rel = np.abs(a - numeric) / np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor)
    err = float(rel.max()) if rel.size else 0.0
    if return_details:
        return err, {"coords": coords, "analytic": a, "numeric": numeric, "rel": rel}
    return err
