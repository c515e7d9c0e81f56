"""Multilayer perceptrons with hand-written reverse-mode gradients, plus Adam.

Hidden layers are tanh; the output head is linear (critics) or tanh
(actor).  backward() returns both the parameter gradients and the gradient
with respect to the input, which is what lets the policy update flow
through a critic.
"""

from __future__ import annotations

import numpy as np


class Mlp:
    """Fully connected network; parameters live in the flat list [W1, b1, W2, b2, ...]."""

    def __init__(self, sizes, out_act: str = "linear", rng: np.random.Generator | None = None):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if out_act not in ("linear", "tanh"):
            raise ValueError(f"unknown output activation {out_act!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.out_act = out_act
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(n_in)
            self.weights.append(rng.uniform(-bound, bound, (n_in, n_out)))
            self.biases.append(rng.uniform(-bound, bound, n_out))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_params(self, params: list[np.ndarray]) -> None:
        for i in range(len(self.weights)):
            self.weights[i] = np.array(params[2 * i], dtype=float)
            self.biases[i] = np.array(params[2 * i + 1], dtype=float)

    def copy(self) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.sizes = self.sizes
        clone.out_act = self.out_act
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.shape[1] != self.sizes[0]:
            raise ValueError(f"expected input size {self.sizes[0]}, got {a.shape[1]}")
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w + b
            if i < last or self.out_act == "tanh":
                a = np.tanh(a)
        return a[0] if single else a

    def forward_cached(self, x: np.ndarray):
        """Batch forward keeping the activations backward() needs."""
        a = np.asarray(x, dtype=float)
        acts = [a]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w + b
            if i < last or self.out_act == "tanh":
                a = np.tanh(a)
            acts.append(a)
        return acts[-1], acts

    def backward(self, acts: list[np.ndarray], grad_out: np.ndarray):
        """Reverse pass from dL/d(output); returns (param grads, dL/d(input))."""
        g = np.asarray(grad_out, dtype=float)
        if self.out_act == "tanh":
            g = g * (1.0 - acts[-1] ** 2)
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:  # hidden activations are tanh
                g = g * (1.0 - acts[i] ** 2)
        return grads, g


class Adam:
    """Adam on a list of parameter arrays, updated in place."""

    def __init__(self, params: list[np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def state(self) -> dict:
        return {
            "t": self.t,
            "m": [a.copy() for a in self.m],
            "v": [a.copy() for a in self.v],
        }

    def load_state(self, state: dict) -> None:
        self.t = state["t"]
        self.m = [np.array(a) for a in state["m"]]
        self.v = [np.array(a) for a in state["v"]]


def polyak_update(target: Mlp, source: Mlp, rho: float) -> None:
    """In-place exponential averaging: target <- rho * target + (1 - rho) * source."""
    for tw, sw in zip(target.weights, source.weights):
        tw *= rho
        tw += (1.0 - rho) * sw
    for tb, sb in zip(target.biases, source.biases):
        tb *= rho
        tb += (1.0 - rho) * sb
