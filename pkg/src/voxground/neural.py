"""Minimal neural substrate: dense, conv, LSTM layers with exact gradients.

Everything is float64 numpy; training is bit-deterministic under a fixed
seed.  Layers expose forward/backward with cached activations; gradient
correctness is enforced by the finite-difference checks in the test suite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class NeuralError(Exception):
    pass


class ShapeMismatch(NeuralError):
    pass


class ModelNotTrained(NeuralError):
    pass


class Divergence(NeuralError):
    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


# ---------------------------------------------------------------------------
# Activations

def _act(name: str):
    if name == "relu":
        return (lambda x: np.maximum(x, 0.0)), (lambda x, y: (x > 0).astype(float))
    if name == "tanh":
        return np.tanh, (lambda x, y: 1.0 - y * y)
    if name == "sigmoid":
        def sig(x):
            return 1.0 / (1.0 + np.exp(-np.clip(x, -60, 60)))
        return sig, (lambda x, y: y * (1.0 - y))
    if name == "linear":
        return (lambda x: x), (lambda x, y: np.ones_like(x))
    raise NeuralError(f"unknown activation {name!r}")


def _init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# Layers

class Layer:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, activation: str = "relu",
                 rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        self.n_in, self.n_out = n_in, n_out
        self.activation = activation
        self.act, self.dact = _act(activation)
        self.params = {"W": _init(rng, (n_in, n_out), n_in), "b": np.zeros(n_out)}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x):
        if x.shape[-1] != self.n_in:
            raise ShapeMismatch(f"dense expects {self.n_in}, got {x.shape[-1]}")
        self._x = x
        self._z = x @ self.params["W"] + self.params["b"]
        self._y = self.act(self._z)
        return self._y

    def backward(self, grad):
        gz = grad * self.dact(self._z, self._y)
        self.grads["W"] = self._x.T @ gz
        self.grads["b"] = gz.sum(axis=0)
        return gz @ self.params["W"].T

    def spec(self):
        return {"kind": "dense", "in": self.n_in, "out": self.n_out,
                "activation": self.activation}


class Conv1D(Layer):
    """1D convolution over (batch, length, channels), valid padding."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 activation: str = "relu", rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        self.cin, self.cout, self.k = in_channels, out_channels, kernel
        self.activation = activation
        self.act, self.dact = _act(activation)
        self.params = {"W": _init(rng, (kernel, in_channels, out_channels),
                                  kernel * in_channels),
                       "b": np.zeros(out_channels)}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.cin:
            raise ShapeMismatch(f"conv1d expects (B, L, {self.cin})")
        b, length, _ = x.shape
        out_len = length - self.k + 1
        if out_len < 1:
            raise ShapeMismatch("conv1d input shorter than kernel")
        self._x = x
        # im2col: (B, out_len, k*cin)
        cols = np.stack([x[:, t:t + self.k, :].reshape(b, -1) for t in range(out_len)], axis=1)
        self._cols = cols
        z = cols @ self.params["W"].reshape(-1, self.cout) + self.params["b"]
        self._z = z
        self._y = self.act(z)
        return self._y

    def backward(self, grad):
        gz = grad * self.dact(self._z, self._y)
        b, out_len, _ = gz.shape
        wflat = self.params["W"].reshape(-1, self.cout)
        self.grads["W"] = (self._cols.reshape(-1, wflat.shape[0]).T
                           @ gz.reshape(-1, self.cout)).reshape(self.params["W"].shape)
        self.grads["b"] = gz.sum(axis=(0, 1))
        gcols = gz @ wflat.T  # (B, out_len, k*cin)
        gx = np.zeros_like(self._x)
        for t in range(out_len):
            gx[:, t:t + self.k, :] += gcols[:, t, :].reshape(b, self.k, self.cin)
        return gx

    def spec(self):
        return {"kind": "conv1d", "in": self.cin, "out": self.cout,
                "kernel": self.k, "activation": self.activation}


class Conv2D(Layer):
    """2D convolution over (batch, H, W, channels), valid padding."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 activation: str = "relu", rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        self.cin, self.cout, self.k = in_channels, out_channels, kernel
        self.activation = activation
        self.act, self.dact = _act(activation)
        self.params = {"W": _init(rng, (kernel, kernel, in_channels, out_channels),
                                  kernel * kernel * in_channels),
                       "b": np.zeros(out_channels)}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != self.cin:
            raise ShapeMismatch(f"conv2d expects (B, H, W, {self.cin})")
        b, h, w, _ = x.shape
        oh, ow = h - self.k + 1, w - self.k + 1
        if oh < 1 or ow < 1:
            raise ShapeMismatch("conv2d input smaller than kernel")
        self._x = x
        cols = np.empty((b, oh, ow, self.k * self.k * self.cin))
        for i in range(oh):
            for j in range(ow):
                cols[:, i, j, :] = x[:, i:i + self.k, j:j + self.k, :].reshape(b, -1)
        self._cols = cols
        z = cols @ self.params["W"].reshape(-1, self.cout) + self.params["b"]
        self._z = z
        self._y = self.act(z)
        return self._y

    def backward(self, grad):
        gz = grad * self.dact(self._z, self._y)
        b, oh, ow, _ = gz.shape
        wflat = self.params["W"].reshape(-1, self.cout)
        self.grads["W"] = (self._cols.reshape(-1, wflat.shape[0]).T
                           @ gz.reshape(-1, self.cout)).reshape(self.params["W"].shape)
        self.grads["b"] = gz.sum(axis=(0, 1, 2))
        gcols = gz @ wflat.T
        gx = np.zeros_like(self._x)
        for i in range(oh):
            for j in range(ow):
                gx[:, i:i + self.k, j:j + self.k, :] += \
                    gcols[:, i, j, :].reshape(b, self.k, self.k, self.cin)
        return gx

    def spec(self):
        return {"kind": "conv2d", "in": self.cin, "out": self.cout,
                "kernel": self.k, "activation": self.activation}


class Flatten(Layer):
    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)

    def spec(self):
        return {"kind": "flatten"}


class LSTM(Layer):
    """Single-layer LSTM over (batch, time, features); returns last hidden."""

    def __init__(self, n_in: int, hidden: int, rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        self.n_in, self.hidden = n_in, hidden
        z = n_in + hidden
        self.params = {
            g + w: (_init(rng, (z, hidden), z) if w == "W" else np.zeros(hidden))
            for g in "ifco" for w in ("W", "b")
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ShapeMismatch(f"lstm expects (B, T, {self.n_in})")
        b, t, _ = x.shape
        sig, _ = _act("sigmoid")
        h = np.zeros((b, self.hidden))
        c = np.zeros((b, self.hidden))
        self._cache = []
        self._x = x
        for step in range(t):
            xt = x[:, step, :]
            zcat = np.concatenate([xt, h], axis=1)
            i = sig(zcat @ self.params["iW"] + self.params["ib"])
            f = sig(zcat @ self.params["fW"] + self.params["fb"])
            o = sig(zcat @ self.params["oW"] + self.params["ob"])
            g = np.tanh(zcat @ self.params["cW"] + self.params["cb"])
            c_new = f * c + i * g
            h_new = o * np.tanh(c_new)
            self._cache.append((zcat, i, f, o, g, c, c_new))
            h, c = h_new, c_new
        self._h = h
        return h

    def backward(self, grad):
        b, t, _ = self._x.shape
        gx = np.zeros_like(self._x)
        for k in self.grads:
            self.grads[k] = np.zeros_like(self.params[k])
        dh = grad
        dc = np.zeros((b, self.hidden))
        for step in reversed(range(t)):
            zcat, i, f, o, g, c_prev, c_new = self._cache[step]
            tanh_c = np.tanh(c_new)
            do = dh * tanh_c
            dc = dc + dh * o * (1.0 - tanh_c ** 2)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_prev = dc * f
            dzi = di * i * (1.0 - i)
            dzf = df * f * (1.0 - f)
            dzo = do * o * (1.0 - o)
            dzg = dg * (1.0 - g ** 2)
            dzcat = np.zeros_like(zcat)
            for name, dz in (("i", dzi), ("f", dzf), ("o", dzo), ("c", dzg)):
                self.grads[name + "W"] += zcat.T @ dz
                self.grads[name + "b"] += dz.sum(axis=0)
                dzcat += dz @ self.params[name + "W"].T
            gx[:, step, :] = dzcat[:, :self.n_in]
            dh = dzcat[:, self.n_in:]
            dc = dc_prev
        return gx

    def gate_activations(self, x):
        """Gate values per step (for the gate-range invariant tests)."""
        self.forward(x)
        return [(i, f, o) for (_, i, f, o, _, _, _) in self._cache]

    def spec(self):
        return {"kind": "lstm", "in": self.n_in, "hidden": self.hidden}


# ---------------------------------------------------------------------------
# Network, loss, training

def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, targets: np.ndarray):
    """Mean CE over the batch; targets may be indices or distributions.

    Returns (loss, grad wrt logits).
    """
    p = softmax(logits)
    n = logits.shape[0]
    if targets.ndim == 1:
        onehot = np.zeros_like(p)
        onehot[np.arange(n), targets.astype(int)] = 1.0
        targets = onehot
    loss = float(-(targets * np.log(np.clip(p, 1e-12, None))).sum() / n)
    return loss, (p - targets) / n


class Network:
    def __init__(self, layers: list[Layer], seed: int = 0):
        self.layers = layers
        self.seed = seed
        self.trained = False

    @classmethod
    def build(cls, specs: list[dict], seed: int = 0) -> "Network":
        rng = np.random.default_rng(seed)
        layers: list[Layer] = []
        for s in specs:
            kind = s["kind"]
            if kind == "dense":
                layers.append(Dense(s["in"], s["out"], s.get("activation", "relu"), rng))
            elif kind == "conv1d":
                layers.append(Conv1D(s["in"], s["out"], s["kernel"],
                                     s.get("activation", "relu"), rng))
            elif kind == "conv2d":
                layers.append(Conv2D(s["in"], s["out"], s["kernel"],
                                     s.get("activation", "relu"), rng))
            elif kind == "lstm":
                layers.append(LSTM(s["in"], s["hidden"], rng))
            elif kind == "flatten":
                layers.append(Flatten())
            else:
                raise NeuralError(f"unknown layer kind {kind!r}")
        return cls(layers, seed)

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad: np.ndarray):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self):
        for li, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield (li, name), layer.params[name], layer.grads[name]

    def save(self, path):
        doc = {"seed": self.seed, "trained": self.trained,
               "layers": [l.spec() for l in self.layers],
               "params": {f"{li}.{name}": p.tolist()
                          for (li, name), p, _ in self.parameters()}}
        with open(path, "w") as f:
            json.dump(doc, f)

    @classmethod
    def load(cls, path) -> "Network":
        with open(path) as f:
            doc = json.load(f)
        net = cls.build(doc["layers"], seed=doc["seed"])
        for key, value in doc["params"].items():
            li, name = key.split(".", 1)
            net.layers[int(li)].params[name] = np.array(value)
        net.trained = doc["trained"]
        return net


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    optimizer: str = "adam"  # "adam" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Optimizer:
    def __init__(self, net: Network, config: TrainConfig):
        self.net = net
        self.cfg = config
        self.t = 0
        if config.optimizer == "adam":
            self.m = {key: np.zeros_like(p) for key, p, _ in net.parameters()}
            self.v = {key: np.zeros_like(p) for key, p, _ in net.parameters()}

    def step(self):
        self.t += 1
        cfg = self.cfg
        for key, p, g in self.net.parameters():
            if cfg.optimizer == "sgd":
                p -= cfg.learning_rate * g
            else:
                self.m[key] = cfg.beta1 * self.m[key] + (1 - cfg.beta1) * g
                self.v[key] = cfg.beta2 * self.v[key] + (1 - cfg.beta2) * g * g
                mhat = self.m[key] / (1 - cfg.beta1 ** self.t)
                vhat = self.v[key] / (1 - cfg.beta2 ** self.t)
                p -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps)


def train_classifier(net: Network, inputs: np.ndarray, targets: np.ndarray,
                     config: TrainConfig) -> list[float]:
    """Train with softmax cross-entropy; returns the per-epoch loss curve."""
    if len(inputs) == 0:
        raise NeuralError("empty dataset")
    rng = np.random.default_rng(config.seed)
    opt = Optimizer(net, config)
    curve = []
    n = len(inputs)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            logits = net.forward(inputs[idx])
            loss, grad = softmax_cross_entropy(logits, targets[idx])
            total += loss * len(idx)
            net.backward(grad)
            opt.step()
        epoch_loss = total / n
        if not math.isfinite(epoch_loss):
            raise Divergence(epoch)
        curve.append(epoch_loss)
    net.trained = True
    return curve


def gradient_check(net: Network, x: np.ndarray, targets: np.ndarray,
                   epsilon: float = 1e-5) -> float:
    """Max relative error of analytic vs central finite-difference grads."""
    logits = net.forward(x)
    _, grad = softmax_cross_entropy(logits, targets)
    net.backward(grad)
    analytic = {key: g.copy() for key, _, g in net.parameters()}
    worst = 0.0
    for key, p, _ in net.parameters():
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            lp, _ = softmax_cross_entropy(net.forward(x), targets)
            flat[i] = orig - epsilon
            lm, _ = softmax_cross_entropy(net.forward(x), targets)
            flat[i] = orig
            numeric = (lp - lm) / (2 * epsilon)
            a = analytic[key].reshape(-1)[i]
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
