"""Cyclical annealing for the distillation weight, linear warm-up, and Adam."""

from dataclasses import dataclass

import numpy as np

from .encoder import ModelParams
from .errors import InvalidConfig, ShapeMismatch, ValidationError


@dataclass(frozen=True)
class AnnealConfig:
    R: float = 0.5
    G: int = 5000

    def __post_init__(self):
        if not 0.0 < self.R <= 1.0:
            raise InvalidConfig(f"R must lie in (0, 1], got {self.R}")
        if int(self.G) != self.G or self.G < 1:
            raise InvalidConfig(f"G must be a positive integer, got {self.G}")


def annealing_coefficient(t, cfg):
    """Weight at iteration t (1-based): a linear ramp from 0 to 1 over the
    first R*G iterations of each G-iteration cycle, then flat at 1."""
    if t < 1:
        raise InvalidConfig(f"iterations are 1-based, got t={t}")
    r = (t - 1) % cfg.G
    ramp = cfg.R * cfg.G
    if r <= ramp:
        return r / ramp
    return 1.0


def warmup_lr(t, peak_lr, warmup_steps):
    if t < 1 or warmup_steps < 1:
        raise InvalidConfig("step and warmup_steps must be >= 1")
    return min(t / warmup_steps, 1.0) * peak_lr


def _items(params):
    if isinstance(params, ModelParams):
        return dict(zip(params.names(), params.arrays()))
    if isinstance(params, np.ndarray):
        return {"": params}
    return dict(params)


def _rebuild(template, items):
    if isinstance(template, ModelParams):
        return ModelParams(**items)
    if isinstance(template, np.ndarray):
        return items[""]
    return items


@dataclass
class OptimState:
    m: object
    v: object
    t: int = 0


def init_optim_state(params):
    zeros = {k: np.zeros_like(a, dtype=np.float64) for k, a in _items(params).items()}
    return OptimState(_rebuild(params, zeros), _rebuild(params, dict(zeros)), 0)


def adam_step(state, params, grads, lr, beta1=0.9, beta2=0.98, eps=1e-8):
    """One bias-corrected Adam update. Returns new (state, params); inputs
    are not modified. Accepts ModelParams, a dict of arrays, or an array."""
    if not lr > 0:
        raise ValidationError(f"learning rate must be positive, got {lr}")
    p_items, g_items = _items(params), _items(grads)
    m_items, v_items = _items(state.m), _items(state.v)
    if p_items.keys() != g_items.keys():
        raise ShapeMismatch("parameter and gradient fields differ")
    t = state.t + 1
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in p_items.items():
        g = np.asarray(g_items[k], dtype=np.float64)
        if g.shape != np.shape(p):
            raise ShapeMismatch(f"{k or 'param'}: gradient {g.shape} vs param {np.shape(p)}")
        m = beta1 * m_items[k] + (1.0 - beta1) * g
        v = beta2 * v_items[k] + (1.0 - beta2) * (g * g)
        new_m[k], new_v[k] = m, v
        new_p[k] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return (OptimState(_rebuild(params, new_m), _rebuild(params, new_v), t),
            _rebuild(params, new_p))
