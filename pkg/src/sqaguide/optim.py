"""Adam / AdamW over dicts of numpy arrays, plus learning-rate schedules."""
import numpy as np


class Adam:
    """Adam with optional decoupled weight decay (AdamW when ``weight_decay > 0``).

    Parameters are updated in place; ``grads`` may omit names (zero gradient).
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            g = grads.get(k)
            if g is None:
                g = np.zeros_like(p)
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for {k}")
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            if self.weight_decay:
                p *= 1.0 - lr * self.weight_decay
            p -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def warmup_lr(step, base, warmup):
    """Linear warm-up from ``base/warmup`` to ``base`` over ``warmup`` steps (1-based)."""
    if warmup <= 0:
        return base
    return base * min(1.0, step / warmup)


def step_lr(step, base, total, fraction=0.4, gamma=0.5):
    """Multiply by ``gamma`` every ``fraction * total`` steps (0-based step)."""
    period = max(1, int(round(fraction * total)))
    return base * gamma ** (step // period)
