"""Minimal dense neural-network kernel on float64 numpy arrays.

Layers come as explicit forward/backward pairs so the transition network can
run its own backpropagation without an autodiff framework. All arrays are
C-contiguous float64; gradients accumulate into Param.grad until zero_grads
is called. Nothing here keeps hidden global state: random initialisation and
stochastic training draw from caller-owned numpy Generators.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Mapping

import numpy as np
from scipy.special import erf

from .errors import ConfigError, InputError, ShapeError

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def as_f64(x) -> np.ndarray:
    """Return x as a float64 ndarray without copying when already one."""
    return np.asarray(x, dtype=np.float64)


class Param:
    """A learnable array with its gradient and Adam moment buffers.

    Attributes:
        value: current parameter values, float64.
        grad: accumulated gradient, same shape as value.
        m, v: first/second Adam moment estimates.
        step_count: number of Adam updates applied to this parameter.
    """

    __slots__ = ("value", "grad", "m", "v", "step_count")

    def __init__(self, value):
        self.value = as_f64(value).copy()
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)
        self.step_count = 0

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Param(shape={self.value.shape}, steps={self.step_count})"


def zero_grads(params) -> None:
    for p in params:
        p.grad[...] = 0.0


def adam_step(params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """Apply one bias-corrected Adam update to each parameter in place.

    With zero gradients and fresh moments the values are untouched while
    step_count still advances.
    """
    if lr <= 0.0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    for p in params:
        p.step_count += 1
        t = p.step_count
        p.m *= beta1
        p.m += (1.0 - beta1) * p.grad
        p.v *= beta2
        p.v += (1.0 - beta2) * np.square(p.grad)
        m_hat = p.m / (1.0 - beta1 ** t)
        v_hat = p.v / (1.0 - beta2 ** t)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)


def sinusoidal_embed(delta_t, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Sinusoidal position code of a (signed) time difference.

    Entry 2i is sin(delta_t / max_period**(2i/dim)) and entry 2i+1 the cosine
    at the same frequency, for i in 0..dim/2-1. Accepts a scalar or an array
    of deltas; an array input of shape S yields shape S + (dim,).

    Args:
        delta_t: time difference(s), already divided by any time scale.
        dim: embedding width, positive and even.
        max_period: geometric progression base for the wavelengths, > 1.
    """
    if dim <= 0 or dim % 2 != 0:
        raise ConfigError(f"embedding dim must be positive and even, got {dim}")
    if max_period <= 1.0:
        raise ConfigError(f"max_period must exceed 1, got {max_period}")
    delta = as_f64(delta_t)
    if not np.all(np.isfinite(delta)):
        raise InputError("delta_t must be finite")
    half = dim // 2
    divisors = max_period ** (2.0 * np.arange(half) / dim)
    args = delta[..., None] / divisors
    out = np.empty(delta.shape + (dim,), dtype=np.float64)
    out[..., 0::2] = np.sin(args)
    out[..., 1::2] = np.cos(args)
    return out


def linear_forward(x: np.ndarray, weight: Param, bias: Param | None = None) -> np.ndarray:
    """y = x @ weight (+ bias). x is [M, K], weight [K, N]."""
    if x.ndim != 2 or weight.value.ndim != 2 or x.shape[1] != weight.value.shape[0]:
        raise ShapeError(
            f"linear expects [M,K] @ [K,N], got {x.shape} and {weight.value.shape}")
    y = x @ weight.value
    if bias is not None:
        y = y + bias.value
    return y


def linear_backward(gy: np.ndarray, x: np.ndarray, weight: Param,
                    bias: Param | None = None) -> np.ndarray:
    """Accumulate weight/bias gradients and return the input gradient."""
    weight.grad += x.T @ gy
    if bias is not None:
        bias.grad += gy.sum(axis=0)
    return gy @ weight.value.T


def layer_norm_forward(x: np.ndarray, scale: Param, shift: Param,
                       eps: float = 1e-5):
    """Normalise each row of x over its last axis, then scale and shift.

    Returns (y, cache); pass the cache to layer_norm_backward.
    """
    if x.shape[-1] != scale.value.shape[0] or x.shape[-1] != shift.value.shape[0]:
        raise ShapeError(
            f"layer_norm feature width {x.shape[-1]} does not match "
            f"scale {scale.value.shape} / shift {shift.value.shape}")
    mean = x.mean(axis=-1, keepdims=True)
    centred = x - mean
    var = np.mean(np.square(centred), axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centred * inv_std
    y = x_hat * scale.value + shift.value
    cache = (x_hat, inv_std)
    return y, cache


def layer_norm_backward(gy: np.ndarray, cache, scale: Param, shift: Param) -> np.ndarray:
    x_hat, inv_std = cache
    scale.grad += np.sum(gy * x_hat, axis=tuple(range(gy.ndim - 1)))
    shift.grad += np.sum(gy, axis=tuple(range(gy.ndim - 1)))
    g_hat = gy * scale.value
    gx = (g_hat - g_hat.mean(axis=-1, keepdims=True)
          - x_hat * np.mean(g_hat * x_hat, axis=-1, keepdims=True)) * inv_std
    return gx


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact Gaussian error linear unit, x * Phi(x)."""
    return x * 0.5 * (1.0 + erf(x / _SQRT2))


def gelu_backward(gy: np.ndarray, x: np.ndarray) -> np.ndarray:
    phi = 0.5 * (1.0 + erf(x / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))
    return gy * (phi + x * pdf)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(gy: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, gy, 0.0)


class BatchNorm:
    """Batch normalisation over axis 0 with running statistics.

    forward(x, train=True) normalises with the batch statistics and updates
    the running averages (momentum 0.1, unbiased variance); train=False uses
    the stored running statistics. The returned cache feeds backward, which
    only supports the mode it was produced under.
    """

    def __init__(self, width: int, momentum: float = 0.1, eps: float = 1e-5):
        if width <= 0:
            raise ConfigError(f"batch norm width must be positive, got {width}")
        self.scale = Param(np.ones(width))
        self.shift = Param(np.zeros(width))
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)
        self.momentum = float(momentum)
        self.eps = float(eps)

    def params(self):
        return [self.scale, self.shift]

    def forward(self, x: np.ndarray, train: bool):
        if x.ndim != 2 or x.shape[1] != self.scale.value.shape[0]:
            raise ShapeError(
                f"batch norm expects [B,{self.scale.value.shape[0]}], got {x.shape}")
        if train:
            n = x.shape[0]
            if n < 2:
                raise ConfigError(
                    f"batch norm needs at least 2 rows in train mode, got {n}")
            mean = x.mean(axis=0)
            centred = x - mean
            var = np.mean(np.square(centred), axis=0)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            x_hat = centred * inv_std
            self.running_mean += self.momentum * (mean - self.running_mean)
            unbiased = var * n / (n - 1)
            self.running_var += self.momentum * (unbiased - self.running_var)
            cache = (True, x_hat, inv_std)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            x_hat = (x - self.running_mean) * inv_std
            cache = (False, x_hat, inv_std)
        return x_hat * self.scale.value + self.shift.value, cache

    def backward(self, gy: np.ndarray, cache) -> np.ndarray:
        train, x_hat, inv_std = cache
        self.scale.grad += np.sum(gy * x_hat, axis=0)
        self.shift.grad += np.sum(gy, axis=0)
        g_hat = gy * self.scale.value
        if not train:
            return g_hat * inv_std
        return (g_hat - g_hat.mean(axis=0)
                - x_hat * np.mean(g_hat * x_hat, axis=0)) * inv_std

    def state(self) -> dict:
        return {"running_mean": self.running_mean.copy(),
                "running_var": self.running_var.copy()}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        mean = as_f64(state["running_mean"])
        var = as_f64(state["running_var"])
        if mean.shape != self.running_mean.shape or var.shape != self.running_var.shape:
            raise ShapeError("batch norm running statistics have the wrong shape")
        self.running_mean = mean.copy()
        self.running_var = var.copy()


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along the given axis."""
    x = as_f64(x)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(logits: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy of integer class targets.

    Returns (loss, dloss/dlogits). logits is [B, C]; targets is [B] with
    entries in [0, C).
    """
    logits = as_f64(logits)
    targets = np.asarray(targets)
    if logits.ndim != 2 or targets.ndim != 1 or logits.shape[0] != targets.shape[0]:
        raise ShapeError(
            f"cross entropy expects [B,C] logits and [B] targets, "
            f"got {logits.shape} and {targets.shape}")
    n, c = logits.shape
    if targets.size and (targets.min() < 0 or targets.max() >= c):
        raise InputError(f"targets must lie in [0, {c}), got range "
                         f"[{targets.min()}, {targets.max()}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted[np.arange(n), targets] - log_z
    loss = float(-log_probs.mean())
    grad = softmax(logits, axis=1)
    grad[np.arange(n), targets] -= 1.0
    grad /= n
    return loss, grad


@dataclasses.dataclass
class GradCheckReport:
    """Per-parameter maximum relative error of analytic vs numeric gradients."""

    errors: dict[str, float]
    tolerance: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def worst(self) -> tuple[str, float]:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]


def gradient_check(loss_fn: Callable[[], float], params: Mapping[str, Param],
                   step: float = 1e-5, tolerance: float = 1e-3) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    loss_fn must be a deterministic zero-argument closure that runs a fresh
    forward pass and returns a scalar; the analytic gradients must already be
    stored in each Param.grad before calling. Relative error per element is
    |a - n| / max(|a|, |n|, 1e-6); the report keeps the max per parameter.
    The 1e-6 floor keeps identically-zero gradients (a shared scoring bias
    under softmax cross-entropy has one) from amplifying one-ulp noise in the
    central differences into spurious failures.

    Elements that fail at `step` are re-measured once at step/32 and keep the
    better error. A ReLU pre-activation within one step of zero makes the
    central difference straddle the kink, which reads as an O(1) error on
    every upstream parameter even when the analytic gradient is exact;
    shrinking the step moves the probe off the kink, while a genuinely wrong
    gradient keeps failing at any step.
    """
    if step <= 0.0:
        raise ConfigError(f"finite-difference step must be positive, got {step}")
    errors: dict[str, float] = {}
    for name, p in params.items():
        flat = p.value.reshape(-1)
        analytic = p.grad.reshape(-1)
        worst = 0.0
        for k in range(flat.size):
            err = _element_error(loss_fn, flat, k, analytic[k], step)
            if err >= tolerance:
                err = min(err, _element_error(loss_fn, flat, k, analytic[k],
                                              step / 32.0))
            worst = max(worst, err)
        errors[name] = worst
    return GradCheckReport(errors=errors, tolerance=tolerance)


def _element_error(loss_fn, flat: np.ndarray, k: int, analytic: float,
                   step: float) -> float:
    original = flat[k]
    flat[k] = original + step
    up = loss_fn()
    flat[k] = original - step
    down = loss_fn()
    flat[k] = original
    numeric = (up - down) / (2.0 * step)
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
