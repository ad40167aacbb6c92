"""Trainable projection in front of the codebook.

forward:  z -> y = W z + b -> x = standardize(y) -> z_hat = x / |x|
The standardization has no learned gain or bias, so |x| = sqrt(d_proj) up
to the epsilon inside the square root.  The only loss is the commitment
term beta * |sg(c) - z_hat|^2, averaged over the batch; its gradient is
carried back through the three stages analytically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class DegenerateVectorError(ValueError):
    pass


class TrainingAbort(FloatingPointError):
    pass


@dataclass
class ProjectionParams:
    W: np.ndarray  # (d_proj, D)
    b: np.ndarray  # (d_proj,)
    ln_eps: float = 1e-5

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"inconsistent shapes W{self.W.shape} b{self.b.shape}")
        if self.W.shape[0] < 2:
            raise ValueError("d_proj must be at least 2")

    @property
    def d_proj(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    @classmethod
    def init(cls, dim: int, d_proj: int = 256, rng=None, ln_eps: float = 1e-5):
        rng = np.random.default_rng(rng)
        W = rng.standard_normal((d_proj, dim)) / math.sqrt(dim)
        return cls(W, np.zeros(d_proj), ln_eps)

    def copy(self) -> "ProjectionParams":
        return ProjectionParams(self.W.copy(), self.b.copy(), self.ln_eps)


class ForwardCache(NamedTuple):
    z: np.ndarray  # (n, D)
    x: np.ndarray  # standardized, (n, d_proj)
    sigma: np.ndarray  # (n, 1)
    xnorm: np.ndarray  # (n, 1)
    z_hat: np.ndarray  # (n, d_proj)
    params_id: int


def forward(params: ProjectionParams, z: np.ndarray):
    """Project, standardize and L2-normalize one vector or a batch of rows.

    Returns ``(z_hat, cache)``; ``z_hat`` has the same leading shape as ``z``.
    """
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    Z = z[None, :] if single else z
    if not np.isfinite(Z).all():
        raise ValueError("non-finite input to projection")
    y = Z @ params.W.T + params.b
    centered = y - y.mean(axis=1, keepdims=True)
    sigma = np.sqrt((centered * centered).mean(axis=1, keepdims=True) + params.ln_eps)
    x = centered / sigma
    xnorm = np.linalg.norm(x, axis=1, keepdims=True)
    if (xnorm < 1e-12).any():
        raise DegenerateVectorError("standardized projection has (near) zero norm")
    z_hat = x / xnorm
    cache = ForwardCache(Z, x, sigma, xnorm, z_hat, id(params))
    return (z_hat[0] if single else z_hat), cache


def standardized_norm(params: ProjectionParams, z: np.ndarray) -> np.ndarray:
    """L2 norm of the standardized projection before the unit-sphere step."""
    _, cache = forward(params, z)
    return cache.xnorm[:, 0]


def commitment_loss(z_hat, c, beta: float) -> float:
    """beta * |c - z_hat|^2, averaged over rows for a batch."""
    diff = np.asarray(c, dtype=np.float64) - np.asarray(z_hat, dtype=np.float64)
    if diff.ndim == 1:
        return float(beta * diff @ diff)
    return float(beta * np.mean(np.sum(diff * diff, axis=1)))


def backward(params: ProjectionParams, cache: ForwardCache, c, beta: float):
    """Gradient of :func:`commitment_loss` w.r.t. ``(W, b)``; ``c`` is held constant."""
    if cache.params_id != id(params):
        raise RuntimeError("forward cache belongs to a different parameter object")
    C = np.asarray(c, dtype=np.float64).reshape(cache.z_hat.shape)
    n, d = cache.z_hat.shape
    zh = cache.z_hat

    g = (2.0 * beta / n) * (zh - C)
    # through z_hat = x / |x|
    g = (g - zh * np.sum(zh * g, axis=1, keepdims=True)) / cache.xnorm
    # through the parameter-free standardization
    x = cache.x
    g = (g - g.mean(axis=1, keepdims=True) - x * np.mean(g * x, axis=1, keepdims=True)) / cache.sigma

    return g.T @ cache.z, g.sum(axis=0)


def ste_output(z_hat, c):
    """Straight-through quantizer output: z_hat + sg(c - z_hat).

    The value equals ``c``; the gradient w.r.t. ``z_hat`` is the identity, see
    :func:`ste_vjp`.  The commitment-only objective never routes through it.
    """
    z_hat = np.asarray(z_hat, dtype=np.float64)
    return z_hat + (np.asarray(c, dtype=np.float64) - z_hat)


def ste_vjp(grad_out):
    return np.asarray(grad_out)


@dataclass
class LRSchedule:
    eta0: float = 1e-3
    eta_min: float = 1e-4
    t_max: int = 3000

    def __post_init__(self):
        if not (self.eta0 >= self.eta_min > 0):
            raise ValueError("need eta0 >= eta_min > 0")
        if self.t_max < 1:
            raise ValueError("t_max must be positive")

    def lr_at(self, t: int) -> float:
        if not 0 <= t <= self.t_max:
            raise ValueError(f"step {t} outside [0, {self.t_max}]")
        return self.eta_min + 0.5 * (self.eta0 - self.eta_min) * (1.0 + math.cos(math.pi * t / self.t_max))


def lr_at(schedule: LRSchedule, t: int) -> float:
    return schedule.lr_at(t)


@dataclass
class AdamState:
    m_W: np.ndarray
    v_W: np.ndarray
    m_b: np.ndarray
    v_b: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: ProjectionParams, **kw) -> "AdamState":
        return cls(
            np.zeros_like(params.W), np.zeros_like(params.W),
            np.zeros_like(params.b), np.zeros_like(params.b), **kw,
        )

    def copy(self) -> "AdamState":
        return AdamState(self.m_W.copy(), self.v_W.copy(), self.m_b.copy(), self.v_b.copy(),
                         self.t, self.beta1, self.beta2, self.eps)


def adam_update(param, grad, m, v, t, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update applied in place; ``t`` is the new step count (>= 1)."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


def adam_step(params: ProjectionParams, state: AdamState, grads, lr: float):
    dW, db = grads
    if not (np.isfinite(dW).all() and np.isfinite(db).all()):
        raise TrainingAbort("non-finite gradient")
    state.t += 1
    adam_update(params.W, dW, state.m_W, state.v_W, state.t, lr, state.beta1, state.beta2, state.eps)
    adam_update(params.b, db, state.m_b, state.v_b, state.t, lr, state.beta1, state.beta2, state.eps)
    return params, state
