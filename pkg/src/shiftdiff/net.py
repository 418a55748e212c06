"""Small MLP denoiser g(x_t, t[, c]) with hand-derived gradients, plus Adam with EMA."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .diffusion import ContractError


def silu(z):
    return z * expit(z)


def silu_grad(z):
    sig = expit(z)
    return sig * (1.0 + z * (1.0 - sig))


def time_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal embedding at geometric frequencies 1 .. 1/10000, sin half then cos half."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((len(t), 1))], axis=1)
    return emb


@dataclass(eq=False)
class MlpDenoiser:
    data_dim: int
    hidden: int = 128
    depth: int = 2
    time_dim: int = 64
    num_classes: int = 0
    conditional: bool = False
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.data_dim + self.time_dim + (self.num_classes if self.conditional else 0)

    @property
    def num_layers(self) -> int:
        return self.depth + 1

    def layer_shapes(self) -> list[tuple[int, int]]:
        widths = [self.input_dim] + [self.hidden] * self.depth + [self.data_dim]
        return list(zip(widths[:-1], widths[1:]))

    def with_params(self, params: dict[str, np.ndarray]) -> "MlpDenoiser":
        """Same architecture, different parameter set (e.g. the EMA shadow)."""
        mine = {k: params[k] for k in self.params}
        return MlpDenoiser(self.data_dim, self.hidden, self.depth, self.time_dim,
                           self.num_classes, self.conditional, mine)

    def _inputs(self, x_t, t, condition):
        x = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
        if condition is not None and not self.conditional:
            raise ContractError("this network is unconditional; do not pass a condition")
        if condition is None and self.conditional:
            raise ContractError("this network is conditional; a condition is required")
        t = np.broadcast_to(np.asarray(t), (x.shape[0],))
        parts = [x, time_embedding(t, self.time_dim)]
        if self.conditional:
            c = np.broadcast_to(np.asarray(condition), (x.shape[0],))
            parts.append(np.eye(self.num_classes)[c])
        return np.concatenate(parts, axis=1)

    def forward_cached(self, x_t, t, condition=None):
        h = self._inputs(x_t, t, condition)
        cache = [h]
        for i in range(self.num_layers):
            z = h @ self.params[f"net.w{i}"] + self.params[f"net.b{i}"]
            if i < self.num_layers - 1:
                cache.append(z)
                h = silu(z)
                cache.append(h)
            else:
                h = z
        return h, cache

    def backward(self, cache, grad_out) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Gradients of the parameters and of the data part of the input."""
        grads = {}
        delta = grad_out
        for i in reversed(range(self.num_layers)):
            h_in = cache[2 * i]
            grads[f"net.w{i}"] = h_in.T @ delta
            grads[f"net.b{i}"] = delta.sum(axis=0)
            delta = delta @ self.params[f"net.w{i}"].T
            if i > 0:
                delta = delta * silu_grad(cache[2 * i - 1])
        return grads, delta[:, : self.data_dim]

    def __call__(self, x_t, t, condition=None) -> np.ndarray:
        return forward(self, x_t, t, condition)


def init_mlp(data_dim: int, rng: np.random.Generator, hidden: int = 128, depth: int = 2,
             time_dim: int = 64, num_classes: int = 0, conditional: bool = False) -> MlpDenoiser:
    net = MlpDenoiser(data_dim, hidden, depth, time_dim, num_classes, conditional)
    for i, (fan_in, fan_out) in enumerate(net.layer_shapes()):
        bound = 1.0 / math.sqrt(fan_in)
        net.params[f"net.w{i}"] = rng.uniform(-bound, bound, (fan_in, fan_out))
        net.params[f"net.b{i}"] = rng.uniform(-bound, bound, fan_out)
    return net


def forward(net: MlpDenoiser, x_t, t, condition=None) -> np.ndarray:
    out, _ = net.forward_cached(x_t, t, condition)
    return out


def weighted_sq_error(residual, sigma_diag=None) -> np.ndarray:
    """Per-row ||residual||^2 under the inverse of diag(sigma_diag)."""
    sq = residual * residual
    if sigma_diag is not None:
        sq = sq / np.asarray(sigma_diag, dtype=np.float64)
    return sq.sum(axis=-1)


def loss_and_grads(net: MlpDenoiser, x_t, t, target, condition=None, sigma_diag=None):
    """Batch-mean Sigma^{-1}-weighted squared error and its exact gradients.

    Returns ``(loss, grads, grad_x, grad_target)``; the last two let callers
    continue backpropagation into whatever produced ``x_t`` and ``target``.
    """
    out, cache = net.forward_cached(x_t, t, condition)
    resid = out - np.atleast_2d(target)
    n = resid.shape[0]
    loss = float(weighted_sq_error(resid, sigma_diag).mean())
    grad_out = 2.0 * resid / n
    if sigma_diag is not None:
        grad_out = grad_out / np.asarray(sigma_diag, dtype=np.float64)
    grads, grad_x = net.backward(cache, grad_out)
    return loss, grads, grad_x, -grad_out


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    ema_decay: float = 0.999
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    ema: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], **hyper) -> "OptimizerState":
        state = cls(**hyper)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
            state.ema[name] = p.copy()
        return state


def optimizer_step(state: OptimizerState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
    """Bias-corrected Adam update in place, then the EMA shadow update."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.lr != 0.0:
            p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    d = state.ema_decay
    for name, p in params.items():
        shadow = state.ema[name]
        shadow *= d
        shadow += (1.0 - d) * p
