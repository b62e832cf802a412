"""Small feed-forward networks over flat parameter vectors, with manual backprop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
    "relu": (lambda x: np.maximum(x, 0.0), lambda y: (y > 0).astype(float)),
}


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden: tuple
    output_dim: int
    activation: str = "tanh"
    # inputs are mapped to (x - input_shift) / input_scale before the first layer
    input_shift: tuple | None = None
    input_scale: tuple | None = None

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def widths(self) -> list:
        return [self.input_dim, *self.hidden, self.output_dim]

    @property
    def n_params(self) -> int:
        w = self.widths
        return sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1))

    def unflatten(self, theta: np.ndarray) -> list:
        """Views ``[(W, b), ...]`` into ``theta``."""
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        out, k, w = [], 0, self.widths
        for i in range(len(w) - 1):
            n_in, n_out = w[i], w[i + 1]
            W = theta[k : k + n_in * n_out].reshape(n_in, n_out)
            k += n_in * n_out
            b = theta[k : k + n_out]
            k += n_out
            out.append((W, b))
        return out

    def normalize(self, x: np.ndarray) -> np.ndarray:
        if self.input_shift is not None:
            x = x - np.asarray(self.input_shift)
        if self.input_scale is not None:
            x = x / np.asarray(self.input_scale)
        return x

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "output_dim": self.output_dim,
            "activation": self.activation,
            "input_shift": None if self.input_shift is None else list(self.input_shift),
            "input_scale": None if self.input_scale is None else list(self.input_scale),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(
            input_dim=d["input_dim"],
            hidden=tuple(d["hidden"]),
            output_dim=d["output_dim"],
            activation=d.get("activation", "tanh"),
            input_shift=None if d.get("input_shift") is None else tuple(d["input_shift"]),
            input_scale=None if d.get("input_scale") is None else tuple(d["input_scale"]),
        )


def init_params(arch: Architecture, rng: np.random.Generator, output_scale: float = 1.0) -> np.ndarray:
    theta = np.zeros(arch.n_params)
    layers = arch.unflatten(theta)
    for i, (W, _) in enumerate(layers):
        W[...] = rng.normal(0.0, 1.0 / np.sqrt(W.shape[0]), size=W.shape)
        if i == len(layers) - 1:
            W *= output_scale
    return theta


def forward(arch: Architecture, theta: np.ndarray, x: np.ndarray):
    """Returns ``(output, cache)``; ``cache`` holds per-layer inputs for ``backward``."""
    act = _ACTIVATIONS[arch.activation][0]
    layers = arch.unflatten(theta)
    h = arch.normalize(np.asarray(x, dtype=float))
    cache = [h]
    for i, (W, b) in enumerate(layers):
        h = h @ W + b
        if i < len(layers) - 1:
            h = act(h)
        cache.append(h)
    return h, cache


def backward(arch: Architecture, theta: np.ndarray, cache: list, grad_out: np.ndarray) -> np.ndarray:
    """Gradient of ``sum(grad_out * output)`` with respect to ``theta``."""
    dact = _ACTIVATIONS[arch.activation][1]
    layers = arch.unflatten(theta)
    grad = np.zeros_like(theta)
    glayers = arch.unflatten(grad)
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        gW, gb = glayers[i]
        gW[...] = cache[i].T @ g
        gb[...] = g.sum(axis=0)
        if i > 0:
            g = (g @ W.T) * dact(cache[i])
    return grad


class Adam:
    def __init__(self, n: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_dict(self) -> dict:
        return {"m": self.m.tolist(), "v": self.v.tolist(), "t": self.t}
