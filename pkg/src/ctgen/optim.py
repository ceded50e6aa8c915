"""Parameter update rules: RMSProp (the training default) and Adam, plus
Gaussian weight initialization and L2 weight decay.

Decay is applied on the gradient side (g += wd * value) and is gated by
parameter role: weights and batch-norm gammas decay, biases and betas do
not. Both rules are elementwise and deterministic.
"""

import numpy as np

from ctgen.errors import ConfigError, StateError

DECAYED_ROLES = ("weight", "bn_gamma")


def init_gaussian(shape, std, rng):
    """i.i.d. N(0, std^2) tensor; deterministic for a seeded generator."""
    if std <= 0:
        raise ConfigError(f"std must be positive, got {std}")
    return rng.normal(0.0, std, size=shape)


def rmsprop_step(value, grad, cache, lr, rho, eps, weight_decay):
    """One RMSProp update. Returns (new_value, new_cache)."""
    g = grad + weight_decay * value if weight_decay else grad
    cache = rho * cache + (1.0 - rho) * g * g
    value = value - lr * g / (np.sqrt(cache) + eps)
    return value, cache


def adam_step(value, grad, m, v, t, lr, beta1, beta2, eps, weight_decay):
    """One bias-corrected Adam update at step t >= 1. Returns (value, m, v)."""
    g = grad + weight_decay * value if weight_decay else grad
    m = beta1 * m + (1.0 - beta1) * g
    v = beta2 * v + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    value = value - lr * m_hat / (np.sqrt(v_hat) + eps)
    return value, m, v


class RMSProp:
    """RMSProp over a parameter registry; one squared-gradient cache each."""

    kind = "rmsprop"

    def __init__(self, lr, rho=0.9, eps=1e-8, weight_decay=0.0):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.weight_decay = weight_decay
        self.slots = {}

    def step(self, params):
        for p in params.values():
            if p.grad is None:
                raise StateError(f"parameter {p.name} has no gradient")
            cache = self.slots.get(p.name)
            if cache is None:
                cache = np.zeros_like(p.value)
            wd = self.weight_decay if p.role in DECAYED_ROLES else 0.0
            p.value, self.slots[p.name] = rmsprop_step(
                p.value, p.grad, cache, self.lr, self.rho, self.eps, wd
            )

    def state_entries(self):
        return [(name, "cache", arr) for name, arr in self.slots.items()]

    def load_state(self, entries, t=0):
        self.slots = {name: arr for name, slot, arr in entries if slot == "cache"}

    @property
    def t(self):
        return 0


class Adam:
    """Bias-corrected Adam over a parameter registry."""

    kind = "adam"

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.slots = {}
        self.t = 0

    def step(self, params):
        self.t += 1
        for p in params.values():
            if p.grad is None:
                raise StateError(f"parameter {p.name} has no gradient")
            m, v = self.slots.get(p.name, (None, None))
            if m is None:
                m = np.zeros_like(p.value)
                v = np.zeros_like(p.value)
            wd = self.weight_decay if p.role in DECAYED_ROLES else 0.0
            p.value, m, v = adam_step(
                p.value, p.grad, m, v, self.t,
                self.lr, self.beta1, self.beta2, self.eps, wd,
            )
            self.slots[p.name] = (m, v)

    def state_entries(self):
        out = []
        for name, (m, v) in self.slots.items():
            out.append((name, "m", m))
            out.append((name, "v", v))
        return out

    def load_state(self, entries, t=0):
        self.t = t
        ms = {name: arr for name, slot, arr in entries if slot == "m"}
        vs = {name: arr for name, slot, arr in entries if slot == "v"}
        self.slots = {name: (ms[name], vs[name]) for name in ms}


def make_optimizer(kind, lr, weight_decay):
    if kind == "rmsprop":
        return RMSProp(lr, weight_decay=weight_decay)
    if kind == "adam":
        return Adam(lr, weight_decay=weight_decay)
    raise ConfigError(f"unknown optimizer {kind!r}")
